#pragma once

// Image and mask file formats: 8-bit grayscale PGM (P5) and PNG. Encoders
// produce byte buffers so callers can stage outputs before committing them.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ubd/image.hpp"

namespace ubd::io {

namespace fs = std::filesystem;

struct Gray8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

inline std::string lower_extension(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- PGM -------------------------------------------------------------------

inline Gray8 decode_pgm(const std::string& bytes, const std::string& name) {
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_ws();
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw InputError("'" + name + "': malformed PGM header");
    return std::stol(bytes.substr(start, pos - start));
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw InputError("'" + name + "': not a binary PGM (P5)");
  pos = 2;
  const long w = read_int();
  const long h = read_int();
  const long maxval = read_int();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw InputError("'" + name + "': invalid PGM header");
  ++pos;  // single whitespace after maxval
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() < pos + n * bpp) throw InputError("'" + name + "': truncated PGM data");
  Gray8 g{static_cast<int>(w), static_cast<int>(h), std::vector<std::uint8_t>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    long v = bpp == 1 ? static_cast<unsigned char>(bytes[pos + i])
                      : (static_cast<unsigned char>(bytes[pos + 2 * i]) << 8) |
                            static_cast<unsigned char>(bytes[pos + 2 * i + 1]);
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * static_cast<double>(v) / static_cast<double>(maxval)));
  }
  return g;
}

inline std::string encode_pgm(const Gray8& g) {
  std::string out = "P5\n" + std::to_string(g.width) + " " + std::to_string(g.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(g.pixels.data()), g.pixels.size());
  return out;
}

// --- PNG -------------------------------------------------------------------

inline Gray8 decode_png(const std::string& bytes, const std::string& name) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw InputError("'" + name + "': " + image.message);
  image.format = PNG_FORMAT_GRAY;
  Gray8 g{static_cast<int>(image.width), static_cast<int>(image.height), {}};
  g.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, g.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw InputError("'" + name + "': " + msg);
  }
  return g;
}

inline std::string encode_png(const Gray8& g) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(g.width);
  image.height = static_cast<png_uint_32>(g.height);
  image.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, g.pixels.data(), 0, nullptr))
    throw ComputationError(std::string("PNG encode failed: ") + image.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, g.pixels.data(), 0, nullptr))
    throw ComputationError(std::string("PNG encode failed: ") + image.message);
  out.resize(size);
  return out;
}

// --- format dispatch -------------------------------------------------------

inline Gray8 read_gray8(const fs::path& p) {
  const std::string ext = lower_extension(p);
  if (ext != ".png" && ext != ".pgm") throw InputError("'" + p.string() + "': unsupported format (use .png or .pgm)");
  const std::string bytes = read_file(p);
  return ext == ".png" ? decode_png(bytes, p.string()) : decode_pgm(bytes, p.string());
}

inline std::string encode_gray8(const Gray8& g, const fs::path& p) {
  const std::string ext = lower_extension(p);
  if (ext == ".png") return encode_png(g);
  if (ext == ".pgm") return encode_pgm(g);
  throw InputError("'" + p.string() + "': unsupported format (use .png or .pgm)");
}

/// Intensities scaled from 0..255 into [0,1].
inline Image to_image(const Gray8& g) {
  std::vector<double> v(g.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = g.pixels[i] / 255.0;
  return Image(g.width, g.height, std::move(v));
}

inline Gray8 from_image(const Image& img) {
  Gray8 g{img.width(), img.height(), std::vector<std::uint8_t>(img.size())};
  for (std::size_t i = 0; i < img.size(); ++i)
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.pixels()[i], 0.0, 1.0) * 255.0));
  return g;
}

inline Image read_image(const fs::path& p) { return to_image(read_gray8(p)); }

/// Binary channel: any non-zero pixel is foreground.
inline LabelMask::Channel to_channel(const Gray8& g) {
  LabelMask::Channel ch(g.pixels.size());
  for (std::size_t i = 0; i < ch.size(); ++i) ch[i] = g.pixels[i] != 0 ? 1 : 0;
  return ch;
}

inline Gray8 from_channel(const LabelMask& m, std::size_t c) {
  Gray8 g{m.width(), m.height(), std::vector<std::uint8_t>(m.size())};
  for (std::size_t i = 0; i < m.size(); ++i) g.pixels[i] = m.channel(c)[i] ? 255 : 0;
  return g;
}

/// One file per structure, in structure order.
inline LabelMask read_mask(const std::vector<std::string>& structures, const std::vector<fs::path>& paths) {
  if (structures.size() != paths.size()) throw InputError("mask: one file per structure is required");
  int w = -1;
  int h = -1;
  std::vector<LabelMask::Channel> channels;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const Gray8 g = read_gray8(paths[i]);
    if (w >= 0 && (g.width != w || g.height != h))
      throw InputError("'" + paths[i].string() + "': mask dimensions differ from other structures");
    w = g.width;
    h = g.height;
    channels.push_back(to_channel(g));
  }
  return LabelMask(std::max(w, 0), std::max(h, 0), structures, std::move(channels));
}

/// Single 8-bit label map where bit i marks structure i (overlap allowed,
/// up to eight structures). Structure names come from the manifest.
inline LabelMask read_bitmask(const std::vector<std::string>& structures, const fs::path& path) {
  if (structures.size() > 8) throw InputError("label map supports at most 8 structures");
  const Gray8 g = read_gray8(path);
  std::vector<LabelMask::Channel> channels(structures.size(), LabelMask::Channel(g.pixels.size(), 0));
  for (std::size_t i = 0; i < g.pixels.size(); ++i) {
    for (std::size_t s = 0; s < structures.size(); ++s) channels[s][i] = (g.pixels[i] >> s) & 1U;
  }
  return LabelMask(g.width, g.height, structures, std::move(channels));
}

inline Gray8 to_bitmask(const LabelMask& m) {
  if (m.structure_count() > 8) throw InputError("label map supports at most 8 structures");
  Gray8 g{m.width(), m.height(), std::vector<std::uint8_t>(m.size(), 0)};
  for (std::size_t s = 0; s < m.structure_count(); ++s) {
    for (std::size_t i = 0; i < m.size(); ++i) g.pixels[i] |= static_cast<std::uint8_t>(m.channel(s)[i] << s);
  }
  return g;
}

/// Collects output files in memory and publishes them together: each file is
/// written to a temporary sibling and renamed into place only once every
/// file has been produced. Nothing is touched if commit() is never reached.
class StagedOutput {
 public:
  explicit StagedOutput(fs::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& relative, std::string bytes) { files_[relative] = std::move(bytes); }
  bool contains(const std::string& relative) const { return files_.count(relative) != 0; }
  const fs::path& directory() const { return dir_; }

  void commit() const {
    std::vector<std::pair<fs::path, fs::path>> moves;
    try {
      for (const auto& [rel, bytes] : files_) {
        const fs::path target = dir_ / rel;
        fs::create_directories(target.parent_path());
        fs::path tmp = target;
        tmp += ".tmp";
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        if (!out) throw ComputationError("failed writing '" + tmp.string() + "'");
        moves.emplace_back(tmp, target);
      }
    } catch (const fs::filesystem_error& e) {
      for (const auto& [tmp, _] : moves) fs::remove(tmp);
      throw ComputationError(e.what());
    } catch (...) {
      for (const auto& [tmp, _] : moves) fs::remove(tmp);
      throw;
    }
    for (const auto& [tmp, target] : moves) fs::rename(tmp, target);
  }

 private:
  fs::path dir_;
  std::map<std::string, std::string> files_;
};

}  // namespace ubd::io
