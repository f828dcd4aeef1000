#include "ultranerf/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "ultranerf/error.hpp"

namespace unerf::io {

std::uint8_t quantize(float v) {
  const float c = std::clamp(std::isnan(v) ? 0.0f : v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

Frame quantized(const Frame& f) {
  Frame q = f;
  for (auto& v : q.values) v = static_cast<float>(quantize(v)) / 255.0f;
  return q;
}

void write_pgm(const std::filesystem::path& path, const Frame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write image");
  out << "P5\n" << frame.width << ' ' << frame.depth << "\n255\n";
  std::vector<char> row(frame.width);
  for (std::size_t k = 0; k < frame.depth; ++k) {
    for (std::size_t s = 0; s < frame.width; ++s) row[s] = static_cast<char>(quantize(frame.at(s, k)));
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

namespace {

std::string next_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  throw DataError(path.string() + ": truncated PGM header");
}

}  // namespace

Frame read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open image");
  if (next_token(in, path) != "P5") throw DataError(path.string() + ": not a binary PGM (P5)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token(in, path));
    h = std::stoul(next_token(in, path));
    maxval = std::stoul(next_token(in, path));
  } catch (const std::invalid_argument&) {
    throw DataError(path.string() + ": malformed PGM header");
  }
  if (maxval != 255) throw DataError(path.string() + ": only 8-bit PGM is supported");
  in.get();  // single whitespace before the raster
  std::vector<unsigned char> raster(w * h);
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (static_cast<std::size_t>(in.gcount()) != raster.size()) throw DataError(path.string() + ": truncated raster");
  Frame f(w, h);
  for (std::size_t k = 0; k < h; ++k)
    for (std::size_t s = 0; s < w; ++s) f.at(s, k) = static_cast<float>(raster[k * w + s]) / 255.0f;
  return f;
}

Frame normalized(const Frame& f, float& lo, float& hi) {
  lo = f.values.empty() ? 0.0f : *std::min_element(f.values.begin(), f.values.end());
  hi = f.values.empty() ? 0.0f : *std::max_element(f.values.begin(), f.values.end());
  Frame n = f;
  const float range = hi - lo;
  for (auto& v : n.values) v = range > 0.0f ? (v - lo) / range : 0.0f;
  return n;
}

}  // namespace unerf::io
