#ifndef MRSEG_BENCH_HPP
#define MRSEG_BENCH_HPP

/// \file bench.hpp
/// \brief Wall-time of block_split_fit + ridge_predict against split count.
///
/// Only the solver path is timed (Gram formation, factorization, solve and
/// prediction), not an encoder pass. All runs are single-threaded.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrseg/ridge.hpp"
#include "mrseg/rng.hpp"

namespace mrseg {

struct BenchRow {
  std::size_t splits = 0;
  std::size_t block_dim = 0;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  std::uint64_t inversion_cost = 0;
  std::size_t repetitions = 0;
};

struct BenchResult {
  std::size_t feature_dim = 0;
  std::size_t rows = 0;
  std::vector<BenchRow> table;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["feature_dim"] = feature_dim;
    j["rows"] = rows;
    j["results"] = nlohmann::ordered_json::array();
    for (const auto& r : table)
      j["results"].push_back({{"splits", r.splits},
                              {"block_dim", r.block_dim},
                              {"mean_ms", r.mean_ms},
                              {"stddev_ms", r.stddev_ms},
                              {"inversion_cost", r.inversion_cost},
                              {"repetitions", r.repetitions}});
    return j;
  }
};

struct BenchConfig {
  std::size_t feature_dim = 800;
  std::size_t rows = 4096;
  std::vector<std::size_t> splits{1, 2, 4, 8};
  std::size_t repetitions = 10;
  double lambda = 5.0;
  std::uint64_t seed = 1;
};

inline BenchResult run_bench(const BenchConfig& cfg) {
  if (cfg.repetitions == 0) throw ConfigError("bench needs at least one repetition");
  for (std::size_t s : cfg.splits) RidgeConfig{cfg.lambda, s, true}.validate(cfg.feature_dim);

  Rng rng(cfg.seed);
  Matrix x(cfg.rows, cfg.feature_dim);
  for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
  Matrix y(cfg.rows, 1);
  for (double& v : y.data()) v = rng.uniform() < 0.3 ? 1.0 : -1.0;

  BenchResult res{cfg.feature_dim, cfg.rows, {}};
  for (std::size_t s : cfg.splits) {
    const RidgeConfig rc{cfg.lambda, s, true};
    std::vector<double> times;
    double sink = 0.0;
    for (std::size_t r = 0; r < cfg.repetitions; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const RidgeSolution sol = block_split_fit(x, y, rc);
      const Matrix p = ridge_predict(x, sol);
      times.push_back(
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
      sink += p(0, 0);
    }
    if (!std::isfinite(sink)) throw NumericError("bench produced non-finite predictions");
    double mean = 0.0;
    for (double t : times) mean += t;
    mean /= static_cast<double>(times.size());
    double var = 0.0;
    for (double t : times) var += (t - mean) * (t - mean);
    const double sd = times.size() > 1 ? std::sqrt(var / static_cast<double>(times.size() - 1)) : 0.0;
    res.table.push_back({s, cfg.feature_dim / s, mean, sd, inversion_cost(cfg.feature_dim, s),
                         cfg.repetitions});
  }
  return res;
}

}  // namespace mrseg

#endif  // MRSEG_BENCH_HPP
