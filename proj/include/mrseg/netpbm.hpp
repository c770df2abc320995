#ifndef MRSEG_NETPBM_HPP
#define MRSEG_NETPBM_HPP

/// \file netpbm.hpp
/// \brief Binary PPM (P6) and PGM (P5) reading and writing, maxval 255.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "mrseg/errors.hpp"

namespace mrseg::netpbm {

struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;         ///< 3 for PPM, 1 for PGM
  std::vector<std::uint8_t> pixels;  ///< interleaved, row-major
};

inline void write(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw FormatError("netpbm supports 1 or 3 channels");
  if (img.pixels.size() != img.width * img.height * img.channels)
    throw FormatError("netpbm pixel buffer size mismatch for " + path.string());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << (img.channels == 3 ? "P6" : "P5") << '\n'
      << img.width << ' ' << img.height << '\n'
      << 255 << '\n';
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

namespace detail {

class HeaderReader {
 public:
  HeaderReader(const std::vector<std::uint8_t>& buf, const std::string& name)
      : buf_(buf), name_(name) {}

  void skip_space_and_comments() {
    while (pos_ < buf_.size()) {
      if (buf_[pos_] == '#') {
        while (pos_ < buf_.size() && buf_[pos_] != '\n') ++pos_;
      } else if (std::isspace(buf_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space_and_comments();
    std::size_t v = 0, digits = 0;
    while (pos_ < buf_.size() && std::isdigit(buf_[pos_])) {
      v = v * 10 + (buf_[pos_] - '0');
      ++pos_;
      if (++digits > 9) fail("header number too long");
    }
    if (digits == 0) fail("expected a number in header");
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }
  [[noreturn]] void fail(const std::string& why) const {
    throw FormatError("malformed netpbm file " + name_ + ": " + why);
  }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Image8 read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  detail::HeaderReader hr(buf, path.string());
  if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != '5' && buf[1] != '6'))
    hr.fail("missing P5/P6 magic");
  Image8 img;
  img.channels = buf[1] == '6' ? 3 : 1;
  hr.advance();
  hr.advance();
  img.width = hr.number();
  img.height = hr.number();
  const std::size_t maxval = hr.number();
  if (maxval != 255) hr.fail("only maxval 255 is supported");
  if (hr.pos() >= buf.size() || !std::isspace(buf[hr.pos()])) hr.fail("missing header terminator");
  const std::size_t start = hr.pos() + 1;
  const std::size_t n = img.width * img.height * img.channels;
  if (buf.size() - start != n)
    hr.fail("payload has " + std::to_string(buf.size() - start) + " bytes, expected " +
            std::to_string(n));
  img.pixels.assign(buf.begin() + static_cast<std::ptrdiff_t>(start), buf.end());
  return img;
}

}  // namespace mrseg::netpbm

#endif  // MRSEG_NETPBM_HPP
