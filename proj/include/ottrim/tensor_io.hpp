#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ottrim/error.hpp"
#include "ottrim/types.hpp"

namespace ottrim {

static_assert(std::endian::native == std::endian::little,
              "NPY payloads are decoded in place; big-endian hosts are unsupported");

/// Patch-token embeddings for a clip, stored frame-major as a (T*N) x D
/// matrix. Row t*N + i is token i of frame t. Global tokens are not stored.
class TokenTensor {
 public:
  TokenTensor() = default;
  TokenTensor(Index frames, Index tokens_per_frame, Matrix data)
      : frames_(frames), tokens_(tokens_per_frame), data_(std::move(data)) {
    if (frames_ < 1 || tokens_ < 1 || data_.cols() < 1)
      throw ShapeError("token tensor dimensions must all be >= 1");
    if (data_.rows() != frames_ * tokens_)
      throw ShapeError("token tensor holds " + std::to_string(data_.rows()) + " rows, expected " +
                       std::to_string(frames_ * tokens_));
    if (!data_.allFinite()) throw ValidationError("token tensor contains non-finite values");
  }

  Index frames() const noexcept { return frames_; }
  Index tokens_per_frame() const noexcept { return tokens_; }
  Index dim() const noexcept { return data_.cols(); }
  const Matrix& data() const noexcept { return data_; }

  FrameView frame(Index t) const { return data_.middleRows(t * tokens_, tokens_); }

 private:
  Index frames_ = 0;
  Index tokens_ = 0;
  Matrix data_;
};

/// Grayscale frame with intensities in [0,1], row-major.
class ImageFrame {
 public:
  ImageFrame() = default;
  ImageFrame(Index height, Index width, std::vector<double> pixels)
      : height_(height), width_(width), pixels_(std::move(pixels)) {
    if (height_ < 3 || width_ < 3)
      throw SizeError("frame must be at least 3x3, got " + std::to_string(height_) + "x" +
                      std::to_string(width_));
    if (static_cast<Index>(pixels_.size()) != height_ * width_)
      throw ShapeError("frame pixel count does not match its dimensions");
    for (double& p : pixels_) {
      if (!std::isfinite(p)) throw ValidationError("frame contains non-finite values");
      p = std::clamp(p, 0.0, 1.0);
    }
  }

  Index height() const noexcept { return height_; }
  Index width() const noexcept { return width_; }
  double at(Index y, Index x) const { return pixels_[static_cast<std::size_t>(y * width_ + x)]; }
  const std::vector<double>& pixels() const noexcept { return pixels_; }

 private:
  Index height_ = 0;
  Index width_ = 0;
  std::vector<double> pixels_;
};

// ---------------------------------------------------------------------------
// NPY v1.0

struct NpyArray {
  std::vector<std::size_t> shape;
  std::vector<double> values;  // C order, upcast to float64
};

namespace detail {

inline constexpr std::array<unsigned char, 6> kNpyMagic = {0x93, 'N', 'U', 'M', 'P', 'Y'};

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// Minimal parser for the Python-literal dict in an NPY header. Offsets in
// error messages are absolute file offsets.
class NpyHeaderParser {
 public:
  NpyHeaderParser(std::string_view text, std::size_t base) : text_(text), base_(base) {}

  void parse(std::string& descr, bool& fortran, std::vector<std::size_t>& shape) {
    bool have_descr = false, have_fortran = false, have_shape = false;
    skip_ws();
    expect('{');
    for (;;) {
      skip_ws();
      if (peek() == '}') {
        ++pos_;
        break;
      }
      const std::string key = parse_string();
      skip_ws();
      expect(':');
      skip_ws();
      if (key == "descr") {
        descr = parse_string();
        have_descr = true;
      } else if (key == "fortran_order") {
        fortran = parse_bool();
        have_fortran = true;
      } else if (key == "shape") {
        shape = parse_shape();
        have_shape = true;
      } else {
        fail("unexpected header key '" + key + "'");
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      skip_ws();
      expect('}');
      break;
    }
    if (!have_descr || !have_fortran || !have_shape)
      fail("header must define descr, fortran_order and shape");
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw FormatError(msg, base_ + pos_); }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "' in NPY header");
    ++pos_;
  }

  std::string parse_string() {
    const char quote = peek();
    if (quote != '\'' && quote != '"') fail("expected quoted string in NPY header");
    ++pos_;
    const auto end = text_.find(quote, pos_);
    if (end == std::string_view::npos) fail("unterminated string in NPY header");
    std::string out(text_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }

  bool parse_bool() {
    if (text_.substr(pos_, 4) == "True") {
      pos_ += 4;
      return true;
    }
    if (text_.substr(pos_, 5) == "False") {
      pos_ += 5;
      return false;
    }
    fail("expected True or False in NPY header");
  }

  std::vector<std::size_t> parse_shape() {
    std::vector<std::size_t> dims;
    expect('(');
    for (;;) {
      skip_ws();
      if (peek() == ')') {
        ++pos_;
        return dims;
      }
      std::size_t value = 0;
      const char* first = text_.data() + pos_;
      const char* last = text_.data() + text_.size();
      auto [ptr, ec] = std::from_chars(first, last, value);
      if (ec != std::errc() || ptr == first) fail("bad dimension in NPY shape");
      pos_ += static_cast<std::size_t>(ptr - first);
      // Python longs may carry an 'L' suffix in old files.
      if (peek() == 'L') ++pos_;
      dims.push_back(value);
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      skip_ws();
      expect(')');
      return dims;
    }
  }

  std::string_view text_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Decodes an in-memory NPY v1.0 image holding little-endian float32 or
/// float64 data in C order.
inline NpyArray parse_npy(std::string_view bytes) {
  if (bytes.size() < 10) throw FormatError("file too short for NPY preamble", bytes.size());
  for (std::size_t i = 0; i < detail::kNpyMagic.size(); ++i)
    if (static_cast<unsigned char>(bytes[i]) != detail::kNpyMagic[i])
      throw FormatError("bad NPY magic", i);
  if (bytes[6] != 1 || bytes[7] != 0)
    throw FormatError("unsupported NPY version " + std::to_string(int(bytes[6])) + "." +
                          std::to_string(int(bytes[7])) + " (only 1.0 is accepted)",
                      6);
  const std::size_t header_len = static_cast<unsigned char>(bytes[8]) |
                                 (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
  if (10 + header_len > bytes.size()) throw FormatError("NPY header runs past end of file", 8);

  std::string descr;
  bool fortran = false;
  NpyArray out;
  detail::NpyHeaderParser(bytes.substr(10, header_len), 10).parse(descr, fortran, out.shape);
  if (fortran) throw FormatError("fortran_order=True is not supported", 10);

  std::size_t width = 0;
  if (descr == "<f8")
    width = 8;
  else if (descr == "<f4")
    width = 4;
  else
    throw FormatError("unsupported dtype '" + descr + "' (expected <f4 or <f8)", 10);

  std::size_t count = 1;
  for (std::size_t d : out.shape) count *= d;
  const std::size_t offset = 10 + header_len;
  if (bytes.size() - offset != count * width)
    throw FormatError("payload holds " + std::to_string(bytes.size() - offset) + " bytes, expected " +
                          std::to_string(count * width),
                      offset);

  out.values.resize(count);
  const char* p = bytes.data() + offset;
  if (width == 8) {
    std::memcpy(out.values.data(), p, count * 8);
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      float f;
      std::memcpy(&f, p + 4 * i, 4);
      out.values[i] = static_cast<double>(f);
    }
  }
  return out;
}

inline NpyArray load_npy(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return parse_npy(std::string_view(bytes.data(), bytes.size()));
}

/// Encodes a float64 array as NPY v1.0 with the header padded to a
/// 64-byte boundary.
inline std::string encode_npy(const std::vector<std::size_t>& shape, const double* values) {
  std::string dict = "{'descr': '<f8', 'fortran_order': False, 'shape': (";
  std::size_t count = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    dict += std::to_string(shape[i]);
    if (shape.size() == 1 || i + 1 < shape.size()) dict += ",";
    if (i + 1 < shape.size()) dict += " ";
    count *= shape[i];
  }
  dict += "), }";
  const std::size_t unpadded = 10 + dict.size() + 1;
  dict.append((64 - unpadded % 64) % 64, ' ');
  dict += '\n';

  std::string out(detail::kNpyMagic.begin(), detail::kNpyMagic.end());
  out += '\x01';
  out += '\x00';
  out += static_cast<char>(dict.size() & 0xff);
  out += static_cast<char>((dict.size() >> 8) & 0xff);
  out += dict;
  out.append(reinterpret_cast<const char*>(values), count * sizeof(double));
  return out;
}

inline void save_npy(const std::filesystem::path& path, const std::vector<std::size_t>& shape,
                     const double* values) {
  detail::write_file(path, encode_npy(shape, values));
}

inline TokenTensor token_tensor_from_npy(const NpyArray& arr) {
  if (arr.shape.size() != 3)
    throw ShapeError("token tensor must be 3-D (frames, tokens, dim), got rank " +
                     std::to_string(arr.shape.size()));
  for (double v : arr.values)
    if (!std::isfinite(v)) throw ValidationError("token tensor contains NaN or Inf");
  const auto t = static_cast<Index>(arr.shape[0]);
  const auto n = static_cast<Index>(arr.shape[1]);
  const auto d = static_cast<Index>(arr.shape[2]);
  if (t < 1 || n < 1 || d < 1) throw ShapeError("token tensor dimensions must all be >= 1");
  Matrix data = Eigen::Map<const Matrix>(arr.values.data(), t * n, d);
  return TokenTensor(t, n, std::move(data));
}

inline TokenTensor load_token_tensor(const std::filesystem::path& path) {
  return token_tensor_from_npy(load_npy(path));
}

inline void save_token_tensor(const std::filesystem::path& path, const TokenTensor& tokens) {
  save_npy(path,
           {static_cast<std::size_t>(tokens.frames()), static_cast<std::size_t>(tokens.tokens_per_frame()),
            static_cast<std::size_t>(tokens.dim())},
           tokens.data().data());
}

// ---------------------------------------------------------------------------
// PGM

struct RawImage {
  Index height = 0;
  Index width = 0;
  std::vector<double> pixels;  // scaled to [0,1]
};

/// Decodes binary PGM (P5). Handles '#' comments and 16-bit big-endian
/// samples for maxval > 255. No minimum size is imposed here.
inline RawImage parse_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  if (bytes.size() < 2 || bytes[0] != 'P') throw FormatError("not a PGM file", 0);
  if (bytes[1] == '2') throw FormatError("ASCII PGM (P2) is unsupported; use binary P5", 1);
  if (bytes[1] != '5') throw FormatError("unsupported PNM variant", 1);
  pos = 2;

  auto next_int = [&]() -> long {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    long v = 0;
    auto [ptr, ec] = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), v);
    if (ec != std::errc() || v <= 0) throw FormatError("bad PGM header field", pos);
    pos = static_cast<std::size_t>(ptr - bytes.data());
    return v;
  };

  RawImage img;
  img.width = next_int();
  img.height = next_int();
  const long maxval = next_int();
  if (maxval > 65535) throw FormatError("PGM maxval exceeds 65535", pos);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError("missing whitespace after PGM maxval", pos);
  ++pos;

  const std::size_t count = static_cast<std::size_t>(img.width * img.height);
  const std::size_t sample = maxval > 255 ? 2 : 1;
  if (bytes.size() - pos < count * sample) throw FormatError("PGM raster truncated", bytes.size());
  img.pixels.resize(count);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned v = sample == 2 ? (unsigned(p[2 * i]) << 8) | p[2 * i + 1] : p[i];
    img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return img;
}

inline ImageFrame load_frame(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  const std::string_view view(bytes.data(), bytes.size());
  if (view.size() >= 6 && static_cast<unsigned char>(view[0]) == 0x93) {
    auto arr = parse_npy(view);
    if (arr.shape.size() != 2)
      throw ShapeError("frame NPY must be 2-D, got rank " + std::to_string(arr.shape.size()));
    return ImageFrame(static_cast<Index>(arr.shape[0]), static_cast<Index>(arr.shape[1]),
                      std::move(arr.values));
  }
  auto img = parse_pgm(view);
  return ImageFrame(img.height, img.width, std::move(img.pixels));
}

// ---------------------------------------------------------------------------
// Canonical JSON

namespace detail {

inline void append_real(std::string& out, double v) {
  if (!std::isfinite(v)) throw ValidationError("cannot serialize non-finite real to JSON");
  std::array<char, 40> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 17);
  out.append(buf.data(), ptr);
}

inline void dump_canonical(const nlohmann::json& j, std::string& out) {
  using value_t = nlohmann::json::value_t;
  switch (j.type()) {
    case value_t::object: {
      // nlohmann's default object_t is std::map, so iteration is already
      // lexicographic by key.
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += nlohmann::json(it.key()).dump();
        out += ':';
        dump_canonical(it.value(), out);
      }
      out += '}';
      break;
    }
    case value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        dump_canonical(j[i], out);
      }
      out += ']';
      break;
    }
    case value_t::number_float:
      append_real(out, j.get<double>());
      break;
    case value_t::discarded:
      throw ValidationError("cannot serialize discarded JSON value");
    default:
      out += j.dump();
  }
}

}  // namespace detail

/// Serializes with sorted keys, no insignificant whitespace and reals at 17
/// significant digits, so equal values always give equal bytes.
inline std::string to_canonical_json(const nlohmann::json& j) {
  std::string out;
  detail::dump_canonical(j, out);
  out += '\n';
  return out;
}

/// Writes any report type that has a to_json overload.
template <typename Report>
void save_report(const std::filesystem::path& path, const Report& report) {
  const nlohmann::json j = report;
  detail::write_file(path, to_canonical_json(j));
}

inline nlohmann::json load_json(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("invalid JSON in '") + path.string() + "': " + e.what(), e.byte);
  }
}

}  // namespace ottrim
