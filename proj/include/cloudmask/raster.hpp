// Raster data model, band roles, scene metadata and the flat-binary file
// format used by every stage of the pipeline.
//
// Header file: UTF-8 `key=value` lines. Payload lives next to it at
// `<header path>.bin`, band-sequential, little-endian. DN images store
// unsigned 16-bit samples, calibrated images store 32-bit IEEE floats.
//
//   width, height, bands, calibrated (DN|TOARF), profile
//   band.N.role   B|G|R|NIR|MIR1|MIR2|TIR|CIRRUS
//   band.N.gain, band.N.offset, band.N.esun, band.N.k1, band.N.k2,
//   band.N.wavelength_um
//   sun_zenith_deg, view_zenith_deg, relative_azimuth_deg, sun_azimuth_deg,
//   resolution_m, doy
//
// Blank lines and lines starting with '#' are ignored. Any other key is an
// error. Earth-Sun distance is derived from `doy` with
// d = 1 - 0.01672 * cos(0.9856 * (doy - 4) deg).
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
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace cloudmask {

/// Raised for malformed files, missing files and inconsistent payloads.
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a caller-supplied argument or configuration is invalid.
class config_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Plane

/// Dense row-major 2-D grid.
template <typename T>
class Plane {
 public:
  Plane() = default;
  Plane(std::size_t width, std::size_t height, T fill = T{})
      : width_(width), height_(height), data_(width * height, fill) {}

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t row, std::size_t col) { return data_[row * width_ + col]; }
  const T& operator()(std::size_t row, std::size_t col) const {
    return data_[row * width_ + col];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool same_shape(std::size_t w, std::size_t h) const noexcept {
    return w == width_ && h == height_;
  }
  template <typename U>
  bool same_shape(const Plane<U>& other) const noexcept {
    return other.width() == width_ && other.height() == height_;
  }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<T> data_;
};

// ---------------------------------------------------------------------------
// Band roles

enum class BandRole : std::uint8_t { B, G, R, NIR, MIR1, MIR2, TIR, CIRRUS };

inline constexpr std::array<BandRole, 8> kAllRoles = {
    BandRole::B,    BandRole::G,    BandRole::R,   BandRole::NIR,
    BandRole::MIR1, BandRole::MIR2, BandRole::TIR, BandRole::CIRRUS};

inline constexpr std::string_view role_name(BandRole role) {
  constexpr std::array<std::string_view, 8> names = {"B",    "G",    "R",   "NIR",
                                                     "MIR1", "MIR2", "TIR", "CIRRUS"};
  return names[static_cast<std::size_t>(role)];
}

inline std::optional<BandRole> parse_role(std::string_view text) {
  for (BandRole r : kAllRoles)
    if (role_name(r) == text) return r;
  return std::nullopt;
}

inline constexpr bool is_reflective(BandRole role) { return role != BandRole::TIR; }

/// Bit set of band roles.
class RoleSet {
 public:
  constexpr RoleSet() = default;
  constexpr RoleSet(std::initializer_list<BandRole> roles) {
    for (BandRole r : roles) insert(r);
  }
  constexpr void insert(BandRole r) { bits_ |= bit(r); }
  constexpr bool contains(BandRole r) const { return (bits_ & bit(r)) != 0; }
  constexpr bool contains_all(RoleSet other) const {
    return (bits_ & other.bits_) == other.bits_;
  }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr int size() const { return std::popcount(bits_); }
  friend constexpr bool operator==(RoleSet, RoleSet) = default;

 private:
  static constexpr std::uint8_t bit(BandRole r) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(r));
  }
  std::uint8_t bits_ = 0;
};

// ---------------------------------------------------------------------------
// Metadata

enum class Units : std::uint8_t { DN, TOARF };

struct SceneMetadata {
  double sun_zenith_deg = 0.0;
  double view_zenith_deg = 0.0;
  double relative_azimuth_deg = 0.0;
  /// Azimuth of the sun, clockwise from image north (up). Orients the
  /// shadow-projection geometry in image axes.
  double sun_azimuth_deg = 180.0;
  double spatial_resolution_m = 30.0;
  int acquisition_doy = 1;
  Units calibrated = Units::DN;

  friend bool operator==(const SceneMetadata&, const SceneMetadata&) = default;
};

inline void validate(const SceneMetadata& m) {
  auto in = [](double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v < hi; };
  if (!in(m.sun_zenith_deg, 0.0, 90.0)) throw config_error("sun_zenith_deg outside [0, 90)");
  if (!in(m.view_zenith_deg, 0.0, 90.0)) throw config_error("view_zenith_deg outside [0, 90)");
  if (!in(m.relative_azimuth_deg, 0.0, 360.0))
    throw config_error("relative_azimuth_deg outside [0, 360)");
  if (!in(m.sun_azimuth_deg, 0.0, 360.0)) throw config_error("sun_azimuth_deg outside [0, 360)");
  if (!(std::isfinite(m.spatial_resolution_m) && m.spatial_resolution_m > 0.0))
    throw config_error("resolution_m must be > 0");
  if (m.acquisition_doy < 1 || m.acquisition_doy > 366) throw config_error("doy outside 1..366");
}

/// Earth-Sun distance in astronomical units for a day of year.
inline double earth_sun_distance(int doy) {
  constexpr double deg = std::numbers::pi / 180.0;
  return 1.0 - 0.01672 * std::cos(0.9856 * (doy - 4) * deg);
}

/// Per-band calibration constants. Reflective bands use gain/offset/esun;
/// the thermal band uses the Planck constants k1 (radiance units) and k2 (K).
struct BandCalibration {
  double gain = 0.0;
  double offset = 0.0;
  double esun = 0.0;
  double k1 = 0.0;
  double k2 = 0.0;
  double center_wavelength_um = 0.0;

  friend bool operator==(const BandCalibration&, const BandCalibration&) = default;
};

// ---------------------------------------------------------------------------
// MultiSpectralImage

struct Band {
  BandRole role;
  BandCalibration calibration;
  Plane<float> values;

  friend bool operator==(const Band&, const Band&) = default;
};

/// Banded raster. DN images hold integral values in [0, 65535]; TOARF images
/// hold reflectance (and brightness temperature in kelvin for TIR).
class MultiSpectralImage {
 public:
  MultiSpectralImage() = default;
  MultiSpectralImage(std::size_t width, std::size_t height, SceneMetadata meta = {})
      : width_(width), height_(height), meta_(meta) {}

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return width_ * height_; }

  SceneMetadata& metadata() noexcept { return meta_; }
  const SceneMetadata& metadata() const noexcept { return meta_; }
  Units units() const noexcept { return meta_.calibrated; }

  std::string& profile_name() noexcept { return profile_; }
  const std::string& profile_name() const noexcept { return profile_; }

  const std::vector<Band>& bands() const noexcept { return bands_; }
  std::vector<Band>& bands() noexcept { return bands_; }

  RoleSet roles() const {
    RoleSet s;
    for (const Band& b : bands_) s.insert(b.role);
    return s;
  }
  bool has(BandRole role) const { return roles().contains(role); }

  Band& add_band(BandRole role, Plane<float> values, BandCalibration cal = {}) {
    if (has(role)) throw config_error("duplicate band role " + std::string(role_name(role)));
    if (!values.same_shape(width_, height_)) throw config_error("band plane shape mismatch");
    bands_.push_back(Band{role, cal, std::move(values)});
    return bands_.back();
  }
  Band& add_band(BandRole role, float fill = 0.0f, BandCalibration cal = {}) {
    return add_band(role, Plane<float>(width_, height_, fill), cal);
  }

  const Band* find(BandRole role) const {
    for (const Band& b : bands_)
      if (b.role == role) return &b;
    return nullptr;
  }
  Band* find(BandRole role) {
    for (Band& b : bands_)
      if (b.role == role) return &b;
    return nullptr;
  }
  const Band& band(BandRole role) const {
    if (const Band* b = find(role)) return *b;
    throw config_error("image has no " + std::string(role_name(role)) + " band");
  }
  Band& band(BandRole role) {
    if (Band* b = find(role)) return *b;
    throw config_error("image has no " + std::string(role_name(role)) + " band");
  }

  friend bool operator==(const MultiSpectralImage&, const MultiSpectralImage&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  SceneMetadata meta_;
  std::string profile_;
  std::vector<Band> bands_;
};

// ---------------------------------------------------------------------------
// Tiles

/// Read-only rectangular window of an image grid.
struct Tile {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t row_end() const noexcept { return row + height; }
  std::size_t col_end() const noexcept { return col + width; }
  friend bool operator==(const Tile&, const Tile&) = default;
};

/// Row-major tiling of a width x height grid. Edge tiles may be smaller.
inline std::vector<Tile> tiles(std::size_t width, std::size_t height, std::size_t tile_size) {
  if (tile_size == 0) throw config_error("tile_size must be >= 1");
  std::vector<Tile> out;
  for (std::size_t r = 0; r < height; r += tile_size)
    for (std::size_t c = 0; c < width; c += tile_size)
      out.push_back(Tile{r, c, std::min(tile_size, height - r), std::min(tile_size, width - c)});
  return out;
}

inline std::vector<Tile> tiles(const MultiSpectralImage& img, std::size_t tile_size) {
  return tiles(img.width(), img.height(), tile_size);
}

/// Runs `fn(tile)` over all tiles on up to `threads` workers. Tiles are
/// disjoint, so `fn` may write per-pixel outputs without synchronisation.
inline void for_each_tile(const std::vector<Tile>& ts, unsigned threads,
                          const std::function<void(const Tile&)>& fn) {
  if (threads <= 1 || ts.size() <= 1) {
    for (const Tile& t : ts) fn(t);
    return;
  }
  threads = std::min<unsigned>(threads, static_cast<unsigned>(ts.size()));
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < ts.size(); i += threads) fn(ts[i]);
    });
}

inline unsigned default_thread_count() {
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// Text helpers shared by all key=value formats

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw io_error("cannot format number");
  return std::string(buf.data(), ptr);
}

inline double parse_double(std::string_view text, std::string_view key) {
  double v = 0.0;
  const std::string t = trim(text);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size())
    throw io_error("bad numeric value for '" + std::string(key) + "': " + t);
  return v;
}

inline long long parse_int(std::string_view text, std::string_view key) {
  long long v = 0;
  const std::string t = trim(text);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size())
    throw io_error("bad integer value for '" + std::string(key) + "': " + t);
  return v;
}

/// Ordered key=value lines; rejects duplicate keys.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in,
                                                                          const std::string& what) {
  std::vector<std::pair<std::string, std::string>> out;
  std::map<std::string, int> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw io_error(what + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (seen[key]++) throw io_error(what + ": duplicate key '" + key + "'");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  out << text;
  if (!out) throw io_error("write failed: " + path.string());
}

template <typename T>
void put_le(std::vector<char>& buf, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  buf.insert(buf.end(), bytes.begin(), bytes.end());
}

template <typename T>
T get_le(const char* p) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

inline std::vector<char> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open payload " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_binary_file(const std::filesystem::path& path, const std::vector<char>& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw io_error("write failed: " + path.string());
}

inline std::filesystem::path payload_path(const std::filesystem::path& header) {
  return std::filesystem::path(header.string() + ".bin");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Portable pixmap (binary P6, 8-bit)

struct RgbPixmap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::array<std::uint8_t, 3>> pixels;
};

inline void write_ppm(const std::filesystem::path& path, const RgbPixmap& pm) {
  std::vector<char> buf;
  const std::string head =
      "P6\n" + std::to_string(pm.width) + " " + std::to_string(pm.height) + "\n255\n";
  buf.insert(buf.end(), head.begin(), head.end());
  for (const auto& px : pm.pixels)
    for (std::uint8_t v : px) buf.push_back(static_cast<char>(v));
  detail::write_binary_file(path, buf);
}

inline RgbPixmap read_ppm(const std::filesystem::path& path) {
  const std::vector<char> buf = detail::read_binary_file(path);
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < buf.size()) {
      if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos])))
      tok.push_back(buf[pos++]);
    return tok;
  };
  if (next_token() != "P6") throw io_error(path.string() + ": not a binary RGB pixmap (P6)");
  RgbPixmap pm;
  pm.width = static_cast<std::size_t>(detail::parse_int(next_token(), "width"));
  pm.height = static_cast<std::size_t>(detail::parse_int(next_token(), "height"));
  if (detail::parse_int(next_token(), "maxval") != 255)
    throw io_error(path.string() + ": only 8-bit pixmaps are supported");
  ++pos;  // single whitespace after maxval
  const std::size_t n = pm.width * pm.height;
  if (buf.size() < pos || buf.size() - pos != n * 3)
    throw io_error(path.string() + ": pixmap payload size mismatch");
  pm.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 3; ++k)
      pm.pixels[i][k] = static_cast<std::uint8_t>(buf[pos + 3 * i + k]);
  return pm;
}

// ---------------------------------------------------------------------------
// Image I/O

namespace detail {

inline MultiSpectralImage image_from_ppm(const RgbPixmap& pm) {
  MultiSpectralImage img(pm.width, pm.height);
  img.metadata().calibrated = Units::DN;
  img.profile_name() = "rgb-pixmap";
  for (BandRole role : {BandRole::R, BandRole::G, BandRole::B}) {
    const std::size_t k = role == BandRole::R ? 0 : role == BandRole::G ? 1 : 2;
    Plane<float> p(pm.width, pm.height);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = pm.pixels[i][k];
    img.add_band(role, std::move(p));
  }
  return img;
}

inline bool looks_like_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  return in && magic[0] == 'P' && magic[1] == '6';
}

}  // namespace detail

/// Loads a flat-binary header+payload image or an 8-bit RGB pixmap.
inline MultiSpectralImage read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw io_error("no such file: " + path.string());
  if (detail::looks_like_ppm(path)) return detail::image_from_ppm(read_ppm(path));

  std::istringstream text(detail::read_text_file(path));
  const auto kv = detail::parse_key_values(text, path.string());

  long long width = -1, height = -1, nbands = -1;
  SceneMetadata meta;
  std::string profile;
  struct PendingBand {
    std::optional<BandRole> role;
    BandCalibration cal;
  };
  std::map<long long, PendingBand> pending;

  for (const auto& [key, value] : kv) {
    if (key == "width") width = detail::parse_int(value, key);
    else if (key == "height") height = detail::parse_int(value, key);
    else if (key == "bands") nbands = detail::parse_int(value, key);
    else if (key == "profile") profile = value;
    else if (key == "sun_zenith_deg") meta.sun_zenith_deg = detail::parse_double(value, key);
    else if (key == "view_zenith_deg") meta.view_zenith_deg = detail::parse_double(value, key);
    else if (key == "relative_azimuth_deg") meta.relative_azimuth_deg = detail::parse_double(value, key);
    else if (key == "sun_azimuth_deg") meta.sun_azimuth_deg = detail::parse_double(value, key);
    else if (key == "resolution_m") meta.spatial_resolution_m = detail::parse_double(value, key);
    else if (key == "doy") meta.acquisition_doy = static_cast<int>(detail::parse_int(value, key));
    else if (key == "calibrated") {
      if (value == "DN") meta.calibrated = Units::DN;
      else if (value == "TOARF") meta.calibrated = Units::TOARF;
      else throw io_error("calibrated must be DN or TOARF, got " + value);
    } else if (key.rfind("band.", 0) == 0) {
      const auto dot = key.find('.', 5);
      if (dot == std::string::npos) throw io_error("unknown field '" + key + "'");
      const long long idx = detail::parse_int(std::string_view(key).substr(5, dot - 5), key);
      const std::string field = key.substr(dot + 1);
      PendingBand& pb = pending[idx];
      if (field == "role") {
        pb.role = parse_role(value);
        if (!pb.role) throw io_error("unknown band role '" + value + "'");
      } else if (field == "gain") pb.cal.gain = detail::parse_double(value, key);
      else if (field == "offset") pb.cal.offset = detail::parse_double(value, key);
      else if (field == "esun") pb.cal.esun = detail::parse_double(value, key);
      else if (field == "k1") pb.cal.k1 = detail::parse_double(value, key);
      else if (field == "k2") pb.cal.k2 = detail::parse_double(value, key);
      else if (field == "wavelength_um") pb.cal.center_wavelength_um = detail::parse_double(value, key);
      else throw io_error("unknown field '" + key + "'");
    } else {
      throw io_error("unknown field '" + key + "'");
    }
  }
  if (width <= 0 || height <= 0) throw io_error(path.string() + ": width/height missing or invalid");
  if (nbands < 1) throw io_error(path.string() + ": bands missing or invalid");
  if (static_cast<long long>(pending.size()) != nbands)
    throw io_error(path.string() + ": band count does not match band entries");
  try {
    validate(meta);
  } catch (const config_error& e) {
    throw io_error(path.string() + ": " + e.what());
  }

  const auto w = static_cast<std::size_t>(width), h = static_cast<std::size_t>(height);
  const std::size_t sample = meta.calibrated == Units::DN ? 2 : 4;
  const std::vector<char> payload = detail::read_binary_file(detail::payload_path(path));
  if (payload.size() != w * h * sample * static_cast<std::size_t>(nbands))
    throw io_error(path.string() + ": header/payload size mismatch");

  MultiSpectralImage img(w, h, meta);
  img.profile_name() = profile;
  const char* p = payload.data();
  for (long long i = 0; i < nbands; ++i) {
    auto it = pending.find(i);
    if (it == pending.end() || !it->second.role)
      throw io_error(path.string() + ": band." + std::to_string(i) + ".role missing");
    Plane<float> values(w, h);
    for (std::size_t k = 0; k < values.size(); ++k, p += sample)
      values[k] = sample == 2 ? static_cast<float>(detail::get_le<std::uint16_t>(p))
                              : detail::get_le<float>(p);
    if (img.has(*it->second.role))
      throw io_error(path.string() + ": duplicate band role " +
                     std::string(role_name(*it->second.role)));
    img.add_band(*it->second.role, std::move(values), it->second.cal);
  }
  return img;
}

/// Writes `<path>` (header) and `<path>.bin` (payload).
inline void write_image(const MultiSpectralImage& img, const std::filesystem::path& path) {
  validate(img.metadata());
  const bool dn = img.units() == Units::DN;
  std::ostringstream h;
  h << "width=" << img.width() << "\n"
    << "height=" << img.height() << "\n"
    << "bands=" << img.bands().size() << "\n"
    << "calibrated=" << (dn ? "DN" : "TOARF") << "\n";
  if (!img.profile_name().empty()) h << "profile=" << img.profile_name() << "\n";
  const SceneMetadata& m = img.metadata();
  h << "sun_zenith_deg=" << detail::format_double(m.sun_zenith_deg) << "\n"
    << "view_zenith_deg=" << detail::format_double(m.view_zenith_deg) << "\n"
    << "relative_azimuth_deg=" << detail::format_double(m.relative_azimuth_deg) << "\n"
    << "sun_azimuth_deg=" << detail::format_double(m.sun_azimuth_deg) << "\n"
    << "resolution_m=" << detail::format_double(m.spatial_resolution_m) << "\n"
    << "doy=" << m.acquisition_doy << "\n";

  std::vector<char> payload;
  payload.reserve(img.pixel_count() * img.bands().size() * (dn ? 2 : 4));
  for (std::size_t i = 0; i < img.bands().size(); ++i) {
    const Band& b = img.bands()[i];
    const std::string pre = "band." + std::to_string(i) + ".";
    h << pre << "role=" << role_name(b.role) << "\n"
      << pre << "gain=" << detail::format_double(b.calibration.gain) << "\n"
      << pre << "offset=" << detail::format_double(b.calibration.offset) << "\n"
      << pre << "esun=" << detail::format_double(b.calibration.esun) << "\n"
      << pre << "k1=" << detail::format_double(b.calibration.k1) << "\n"
      << pre << "k2=" << detail::format_double(b.calibration.k2) << "\n"
      << pre << "wavelength_um=" << detail::format_double(b.calibration.center_wavelength_um)
      << "\n";
    for (float v : b.values.data()) {
      if (dn) {
        if (!(v >= 0.0f && v <= 65535.0f) || v != std::floor(v))
          throw config_error("DN band " + std::string(role_name(b.role)) +
                             " holds a non-integral or out-of-range value");
        detail::put_le(payload, static_cast<std::uint16_t>(v));
      } else {
        detail::put_le(payload, v);
      }
    }
  }
  detail::write_text_file(path, h.str());
  detail::write_binary_file(detail::payload_path(path), payload);
}

// ---------------------------------------------------------------------------
// Label rasters (category maps, segment maps, class masks)

enum class LabelKind : std::uint8_t { Categories, Segments, Mask };

inline constexpr std::string_view label_kind_name(LabelKind k) {
  switch (k) {
    case LabelKind::Categories: return "categories";
    case LabelKind::Segments: return "segments";
    case LabelKind::Mask: return "mask";
  }
  return "";
}

/// Single-plane integer raster. Payload sample width: 1 byte for masks,
/// 2 bytes for category maps, 4 bytes for segment maps.
struct LabelRaster {
  LabelKind kind = LabelKind::Categories;
  std::string tag;  // vocabulary name or mask legend
  Plane<std::uint32_t> labels;
};

inline std::size_t label_sample_bytes(LabelKind k) {
  return k == LabelKind::Mask ? 1 : k == LabelKind::Categories ? 2 : 4;
}

inline void write_label_raster(const LabelRaster& lr, const std::filesystem::path& path) {
  std::ostringstream h;
  h << "kind=" << label_kind_name(lr.kind) << "\n"
    << "width=" << lr.labels.width() << "\n"
    << "height=" << lr.labels.height() << "\n"
    << "tag=" << lr.tag << "\n";
  const std::size_t sb = label_sample_bytes(lr.kind);
  std::vector<char> payload;
  payload.reserve(lr.labels.size() * sb);
  const std::uint64_t limit = sb == 4 ? 0xffffffffull : (1ull << (8 * sb)) - 1;
  for (std::uint32_t v : lr.labels.data()) {
    if (v > limit) throw config_error("label value exceeds payload sample width");
    if (sb == 1) detail::put_le(payload, static_cast<std::uint8_t>(v));
    else if (sb == 2) detail::put_le(payload, static_cast<std::uint16_t>(v));
    else detail::put_le(payload, v);
  }
  detail::write_text_file(path, h.str());
  detail::write_binary_file(detail::payload_path(path), payload);
}

inline LabelRaster read_label_raster(const std::filesystem::path& path) {
  std::istringstream text(detail::read_text_file(path));
  const auto kv = detail::parse_key_values(text, path.string());
  LabelRaster lr;
  long long w = -1, h = -1;
  bool have_kind = false;
  for (const auto& [key, value] : kv) {
    if (key == "kind") {
      have_kind = true;
      if (value == "categories") lr.kind = LabelKind::Categories;
      else if (value == "segments") lr.kind = LabelKind::Segments;
      else if (value == "mask") lr.kind = LabelKind::Mask;
      else throw io_error("unknown label raster kind '" + value + "'");
    } else if (key == "width") w = detail::parse_int(value, key);
    else if (key == "height") h = detail::parse_int(value, key);
    else if (key == "tag") lr.tag = value;
    else throw io_error("unknown field '" + key + "'");
  }
  if (!have_kind || w <= 0 || h <= 0) throw io_error(path.string() + ": incomplete label header");
  const std::size_t sb = label_sample_bytes(lr.kind);
  const std::vector<char> payload = detail::read_binary_file(detail::payload_path(path));
  const auto uw = static_cast<std::size_t>(w), uh = static_cast<std::size_t>(h);
  if (payload.size() != uw * uh * sb) throw io_error(path.string() + ": header/payload size mismatch");
  lr.labels = Plane<std::uint32_t>(uw, uh);
  for (std::size_t i = 0; i < lr.labels.size(); ++i) {
    const char* p = payload.data() + i * sb;
    lr.labels[i] = sb == 1   ? detail::get_le<std::uint8_t>(p)
                   : sb == 2 ? detail::get_le<std::uint16_t>(p)
                             : detail::get_le<std::uint32_t>(p);
  }
  return lr;
}

}  // namespace cloudmask
