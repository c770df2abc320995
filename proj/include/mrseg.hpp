#ifndef MRSEG_HPP
#define MRSEG_HPP

#include "mrseg/bench.hpp"
#include "mrseg/checkpoint.hpp"
#include "mrseg/encoder.hpp"
#include "mrseg/errors.hpp"
#include "mrseg/eval.hpp"
#include "mrseg/gradcheck.hpp"
#include "mrseg/loss.hpp"
#include "mrseg/netpbm.hpp"
#include "mrseg/optimizer.hpp"
#include "mrseg/pipeline.hpp"
#include "mrseg/ridge.hpp"
#include "mrseg/rng.hpp"
#include "mrseg/synthvid.hpp"
#include "mrseg/tensor.hpp"

#endif  // MRSEG_HPP
