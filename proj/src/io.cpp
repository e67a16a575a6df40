#include "fisheye/io.hpp"

#include <png.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace fisheye::io {

namespace fs = std::filesystem;

namespace {

void dump_impl(const json& value, int indent, int depth, std::string& out) {
  const std::string pad = indent > 0 ? std::string(static_cast<size_t>(indent * (depth + 1)), ' ') : "";
  const std::string close_pad = indent > 0 ? std::string(static_cast<size_t>(indent * depth), ' ') : "";
  const char* nl = indent > 0 ? "\n" : "";
  switch (value.type()) {
    case json::value_t::number_float: {
      const double d = value.get<double>();
      if (!std::isfinite(d)) {
        out += "null";
        break;
      }
      std::array<char, 40> buf{};
      std::snprintf(buf.data(), buf.size(), "%.17g", d);
      out += buf.data();
      break;
    }
    case json::value_t::array: {
      if (value.empty()) {
        out += "[]";
        break;
      }
      // Arrays of scalars stay on one line; nested structure gets broken up.
      bool flat = true;
      for (const auto& v : value) flat = flat && !v.is_structured();
      out += '[';
      bool first = true;
      for (const auto& v : value) {
        if (!first) out += ',';
        if (!flat) {
          out += nl;
          out += pad;
        }
        dump_impl(v, indent, depth + 1, out);
        first = false;
      }
      if (!flat) {
        out += nl;
        out += close_pad;
      }
      out += ']';
      break;
    }
    case json::value_t::object: {
      if (value.empty()) {
        out += "{}";
        break;
      }
      out += '{';
      bool first = true;
      for (auto it = value.begin(); it != value.end(); ++it) {
        if (!first) out += ',';
        out += nl;
        out += pad;
        out += json(it.key()).dump();
        out += indent > 0 ? ": " : ":";
        dump_impl(it.value(), indent, depth + 1, out);
        first = false;
      }
      out += nl;
      out += close_pad;
      out += '}';
      break;
    }
    default:
      out += value.dump();
  }
}

template <typename T>
T read_array_value(const json& j, size_t i, const char* what) {
  if (!j.is_array() || j.size() <= i || !j[i].is_number()) {
    throw ParseError(std::string("expected numeric array for ") + what);
  }
  return j[i].get<T>();
}

double number_field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number()) {
    throw ParseError(std::string("params: missing numeric field \"") + key + "\"");
  }
  return j[key].get<double>();
}

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

constexpr std::uint32_t kEndianTag = 0x01020304u;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

struct Reader {
  const std::vector<unsigned char>& bytes;
  size_t pos = 0;
  const fs::path& path;

  std::uint32_t u32() {
    if (pos + 4 > bytes.size()) throw ParseError("truncated LMAP file " + path.string());
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
};

std::pair<int, int> read_lmap_header(Reader& r) {
  if (r.bytes.size() < 16 || std::string(r.bytes.begin(), r.bytes.begin() + 4) != "LMAP") {
    throw ParseError("bad LMAP magic in " + r.path.string());
  }
  r.pos = 4;
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  const std::uint32_t tag = r.u32();
  if (tag != kEndianTag) throw ParseError("unsupported LMAP endianness tag in " + r.path.string());
  return {static_cast<int>(h), static_cast<int>(w)};
}

std::string lmap_header(int h, int w) {
  std::string out = "LMAP";
  put_u32(out, static_cast<std::uint32_t>(h));
  put_u32(out, static_cast<std::uint32_t>(w));
  put_u32(out, kEndianTag);
  return out;
}

struct PngReadGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadGuard() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct PngWriteGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteGuard() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

void write_png_raw(const fs::path& path, int width, int height, int channels,
                   const std::vector<unsigned char>& pixels) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  PngWriteGuard g;
  g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw IoError("png_create_write_struct failed for " + path.string());
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw IoError("png_create_info_struct failed for " + path.string());
  if (setjmp(png_jmpbuf(g.png))) throw IoError("libpng error writing " + path.string());
  png_init_io(g.png, file.get());
  png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(g.png, g.info);
  for (int y = 0; y < height; ++y) {
    png_write_row(g.png, pixels.data() + static_cast<size_t>(y) * width * channels);
  }
  png_write_end(g.png, nullptr);
}

unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

std::string dump(const json& value, int indent) {
  std::string out;
  dump_impl(value, indent, 0, out);
  out += '\n';
  return out;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& value) { write_bytes(path, dump(value)); }

json params_to_json(const FisheyeParamsd& p) {
  json j;
  j["k"] = json::array();
  for (int i = 0; i < 5; ++i) j["k"].push_back(p.k(i));
  j["mu"] = p.mu;
  j["mv"] = p.mv;
  j["u0"] = p.u0;
  j["v0"] = p.v0;
  j["theta_max"] = p.theta_max;
  return j;
}

FisheyeParamsd params_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("params: expected a JSON object");
  if (!j.contains("k") || !j["k"].is_array() || j["k"].size() != 5) {
    throw ParseError("params: \"k\" must be an array of 5 numbers");
  }
  FisheyeParamsd p;
  for (int i = 0; i < 5; ++i) p.k(i) = read_array_value<double>(j["k"], i, "k");
  p.mu = number_field(j, "mu");
  p.mv = number_field(j, "mv");
  p.u0 = number_field(j, "u0");
  p.v0 = number_field(j, "v0");
  p.theta_max = j.contains("theta_max") ? number_field(j, "theta_max") : kDefaultThetaMax;
  return p;
}

json segments_to_json(const std::vector<LineSegment>& segments) {
  json out = json::array();
  for (const auto& s : segments) out.push_back({s.x.x(), s.x.y(), s.x_prime.x(), s.x_prime.y()});
  return out;
}

std::vector<LineSegment> segments_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("lines: expected an array");
  std::vector<LineSegment> out;
  for (const auto& line : j) {
    if (!line.is_array() || line.size() != 4) throw ParseError("lines: each entry needs 4 numbers");
    LineSegment s;
    s.x = Pixel(read_array_value<double>(line, 0, "line"), read_array_value<double>(line, 1, "line"));
    s.x_prime =
        Pixel(read_array_value<double>(line, 2, "line"), read_array_value<double>(line, 3, "line"));
    out.push_back(s);
  }
  return out;
}

json polylines_to_json(const std::vector<Polyline>& polylines) {
  json out = json::array();
  for (const auto& pl : polylines) {
    json pts = json::array();
    for (const auto& p : pl.points) pts.push_back({p.x(), p.y()});
    out.push_back(std::move(pts));
  }
  return out;
}

std::vector<std::vector<Pixel>> polyline_points_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("polylines: expected an array");
  std::vector<std::vector<Pixel>> out;
  for (const auto& pl : j) {
    if (!pl.is_array()) throw ParseError("polylines: each polyline must be an array of points");
    std::vector<Pixel> pts;
    for (const auto& p : pl) {
      pts.emplace_back(read_array_value<double>(p, 0, "point"), read_array_value<double>(p, 1, "point"));
    }
    out.push_back(std::move(pts));
  }
  return out;
}

Annotation read_annotation(const fs::path& path) {
  const json j = read_json(path);
  if (!j.is_object() || !j.contains("filename") || !j["filename"].is_string()) {
    throw ParseError("annotation " + path.string() + ": missing \"filename\"");
  }
  if (!j.contains("lines")) throw ParseError("annotation " + path.string() + ": missing \"lines\"");
  Annotation a;
  a.image_path = path.parent_path() / j["filename"].get<std::string>();
  try {
    a.segments = segments_from_json(j["lines"]);
  } catch (const ParseError& e) {
    throw ParseError("annotation " + path.string() + ": " + e.what());
  }
  return a;
}

ImageBuffer read_png(const fs::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());
  std::array<unsigned char, 8> sig{};
  if (std::fread(sig.data(), 1, 8, file.get()) != 8 || png_sig_cmp(sig.data(), 0, 8) != 0) {
    throw ParseError("not a PNG file: " + path.string());
  }
  PngReadGuard g;
  g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw IoError("png_create_read_struct failed for " + path.string());
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw IoError("png_create_info_struct failed for " + path.string());
  if (setjmp(png_jmpbuf(g.png))) throw ParseError("libpng error reading " + path.string());
  png_init_io(g.png, file.get());
  png_set_sig_bytes(g.png, 8);
  png_read_info(g.png, g.info);

  const png_byte color = png_get_color_type(g.png, g.info);
  const png_byte depth = png_get_bit_depth(g.png, g.info);
  if (depth == 16) png_set_strip_16(g.png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(g.png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(g.png);
  if (png_get_valid(g.png, g.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(g.png);
  png_set_strip_alpha(g.png);
  png_read_update_info(g.png, g.info);

  const int w = static_cast<int>(png_get_image_width(g.png, g.info));
  const int h = static_cast<int>(png_get_image_height(g.png, g.info));
  const int channels = png_get_channels(g.png, g.info);
  if (channels != 1 && channels != 3) throw ParseError("unsupported PNG layout in " + path.string());
  std::vector<unsigned char> pixels(static_cast<size_t>(w) * h * channels);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<size_t>(y) * w * channels;
  png_read_image(g.png, rows.data());
  png_read_end(g.png, nullptr);

  ImageBuffer img(w, h, channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        img.channels[c](y, x) = pixels[(static_cast<size_t>(y) * w + x) * channels + c] / 255.0;
      }
    }
  }
  return img;
}

void write_png(const fs::path& path, const ImageBuffer& image) {
  if (image.empty()) throw IoError("refusing to write empty image to " + path.string());
  const int w = image.width();
  const int h = image.height();
  const int channels = image.channel_count();
  std::vector<unsigned char> pixels(static_cast<size_t>(w) * h * channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        pixels[(static_cast<size_t>(y) * w + x) * channels + c] =
            image.valid(y, x) ? quantize(image.channels[c](y, x)) : 0;
      }
    }
  }
  write_png_raw(path, w, h, channels, pixels);
}

void write_mask_png(const fs::path& path, const Mask& mask) {
  const int w = static_cast<int>(mask.cols());
  const int h = static_cast<int>(mask.rows());
  std::vector<unsigned char> pixels(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) pixels[static_cast<size_t>(y) * w + x] = mask(y, x) ? 255 : 0;
  }
  write_png_raw(path, w, h, 1, pixels);
}

Mask read_mask_png(const fs::path& path) {
  const ImageBuffer img = read_png(path);
  return img.channels[0] > 0.5;
}

void write_line_map(const fs::path& path, const LineMap& map) {
  std::string out = lmap_header(map.height(), map.width());
  out.reserve(out.size() + 4 * static_cast<size_t>(map.data.size()));
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) put_f32(out, static_cast<float>(map.data(y, x)));
  }
  write_bytes(path, out);
}

LineMap read_line_map(const fs::path& path) {
  const auto bytes = read_bytes(path);
  Reader r{bytes, 0, path};
  const auto [h, w] = read_lmap_header(r);
  if (bytes.size() != 16 + 4 * static_cast<size_t>(h) * w) {
    throw ParseError("LMAP size mismatch in " + path.string());
  }
  LineMap map(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) map.data(y, x) = r.f32();
  }
  return map;
}

void write_remap_grid(const fs::path& path, const RemapGrid& grid) {
  const int h = grid.height();
  const int w = grid.width();
  std::string out = lmap_header(h, w);
  for (const auto* plane : {&grid.u, &grid.v}) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) put_f32(out, static_cast<float>((*plane)(y, x)));
    }
  }
  std::string bits((static_cast<size_t>(w) * h + 7) / 8, '\0');
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      if (grid.valid(y, x)) bits[i / 8] = static_cast<char>(bits[i / 8] | (1u << (i % 8)));
    }
  }
  write_bytes(path, out + bits);
}

RemapGrid read_remap_grid(const fs::path& path) {
  const auto bytes = read_bytes(path);
  Reader r{bytes, 0, path};
  const auto [h, w] = read_lmap_header(r);
  const size_t n = static_cast<size_t>(h) * w;
  if (bytes.size() != 16 + 8 * n + (n + 7) / 8) {
    throw ParseError("remap grid size mismatch in " + path.string());
  }
  RemapGrid g;
  g.u.resize(h, w);
  g.v.resize(h, w);
  g.valid.resize(h, w);
  for (auto* plane : {&g.u, &g.v}) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) (*plane)(y, x) = r.f32();
    }
  }
  const size_t bit_base = 16 + 8 * n;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      g.valid(y, x) = (bytes[bit_base + i / 8] >> (i % 8)) & 1u;
    }
  }
  return g;
}

}  // namespace fisheye::io

namespace fisheye::io {

namespace {

std::vector<Polyline> polylines_from_record(const json& j) {
  if (!j.contains("polylines")) throw ParseError("missing \"polylines\"");
  const auto points = polyline_points_from_json(j["polylines"]);
  std::vector<LineSegment> sources;
  if (j.contains("polyline_sources")) sources = segments_from_json(j["polyline_sources"]);
  std::vector<Polyline> out;
  for (size_t i = 0; i < points.size(); ++i) {
    Polyline pl;
    pl.points = points[i];
    if (i < sources.size()) pl.source = sources[i];
    for (size_t k = 1; k < pl.points.size(); ++k) pl.arc_length += (pl.points[k] - pl.points[k - 1]).norm();
    out.push_back(std::move(pl));
  }
  return out;
}

std::string string_field(const json& j, const char* key, const fs::path& path) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw ParseError("sample record " + path.string() + ": missing \"" + key + "\"");
  }
  return j[key].get<std::string>();
}

}  // namespace

std::vector<Polyline> read_observations(const fs::path& path) {
  const json j = read_json(path);
  if (!j.is_object()) throw ParseError("observations " + path.string() + ": expected an object");
  try {
    return polylines_from_record(j);
  } catch (const ParseError& e) {
    throw ParseError("observations " + path.string() + ": " + e.what());
  }
}

SampleRecord read_sample_record(const fs::path& path) {
  const json j = read_json(path);
  if (!j.is_object()) throw ParseError("sample record " + path.string() + ": expected an object");
  const fs::path dir = path.parent_path();
  SampleRecord r;
  r.path = path;
  try {
    r.params = params_from_json(j.at("params"));
    r.segments = segments_from_json(j.at("segments"));
    r.polylines = polylines_from_record(j);
    r.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw ParseError("sample record " + path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError("sample record " + path.string() + ": " + e.what());
  }
  r.fisheye_image = read_png(dir / string_field(j, "image", path));
  if (j.contains("mask")) {
    r.fisheye_image.valid = read_mask_png(dir / string_field(j, "mask", path));
    r.fisheye_image.enforce_mask();
  }
  r.line_map_distorted = read_line_map(dir / string_field(j, "line_map_distorted", path));
  r.line_map_rectified = read_line_map(dir / string_field(j, "line_map_rectified", path));
  const int w = j.value("width", r.fisheye_image.width());
  const int h = j.value("height", r.fisheye_image.height());
  r.pinhole = default_pinhole(r.line_map_rectified.width(), r.line_map_rectified.height(),
                              r.params.theta_max);
  if (j.contains("pinhole_f") && j["pinhole_f"].is_number()) r.pinhole.f = j["pinhole_f"].get<double>();
  if (w != r.fisheye_image.width() || h != r.fisheye_image.height()) {
    throw ParseError("sample record " + path.string() + ": image size disagrees with width/height");
  }
  return r;
}

}  // namespace fisheye::io
