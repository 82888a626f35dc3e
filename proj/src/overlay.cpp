/*=========================================================================
 *
 *  Copyright atlaseg contributors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *        http://www.apache.org/licenses/LICENSE-2.0.txt
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 *
 *=========================================================================*/
#include "atlaseg/overlay.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <vector>

#include <zlib.h>

namespace atlaseg {

std::array<unsigned char, 3> class_color(int class_id) {
  static const std::array<std::array<unsigned char, 3>, 7> palette = {{
      {230, 60, 60},   // shell
      {60, 200, 60},   // left atrium
      {70, 110, 245},  // left ventricle
      {235, 220, 60},  // right atrium
      {225, 70, 225},  // right ventricle
      {70, 220, 220},  // aorta
      {245, 150, 50},  // pulmonary artery
  }};
  if (class_id < 1) return {255, 255, 255};
  return palette[static_cast<std::size_t>((class_id - 1) % 7)];
}

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

void put_chunk(std::vector<unsigned char>& out, const char type[4],
               const std::vector<unsigned char>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), out.data() + crc_start,
                          static_cast<uInt>(out.size() - crc_start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

void write_png(const std::string& path, int width, int height,
               const std::vector<unsigned char>& rgb) {
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * static_cast<std::size_t>(width)));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // no scanline filter
    const std::size_t row = static_cast<std::size_t>(y) * 3 * static_cast<std::size_t>(width);
    raw.insert(raw.end(), rgb.begin() + row, rgb.begin() + row + 3 * static_cast<std::size_t>(width));
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw NumericError("PNG compression failed");
  compressed.resize(bound);

  std::vector<unsigned char> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<unsigned char> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(width));
  put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", compressed);
  put_chunk(png, "IEND", {});

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("cannot open PNG for writing: " + path);
  const std::size_t written = std::fwrite(png.data(), 1, png.size(), f);
  std::fclose(f);
  if (written != png.size()) throw DataError("failed writing PNG: " + path);
}

}  // namespace

void export_overlay(const ScalarVolume& image, const LabelVolume& labels, int z,
                    const std::string& path) {
  image.validate();
  labels.validate();
  if (!image.grid.same_as(labels.grid)) throw DataError("image and labels are on different grids");
  if (z < 0 || z >= image.grid.dims[2])
    throw DataError("slice " + std::to_string(z) + " out of range");

  const int w = image.grid.dims[0];
  const int h = image.grid.dims[1];
  const double lo = image.data.minCoeff();
  const double hi = image.data.maxCoeff();
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;

  auto label_at = [&](int i, int j) { return labels.at(i, j, z); };

  std::vector<unsigned char> rgb(static_cast<std::size_t>(w) * h * 3);
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i) {
      const double v = image.at(i, j, z);
      const auto gray = static_cast<unsigned char>(
          hi > lo ? std::min(255.0, std::max(0.0, (v - lo) * scale)) : 128.0);
      unsigned char r = gray, g = gray, b = gray;

      const std::int32_t label = label_at(i, j);
      if (label != 0) {
        const bool boundary = (i == 0 || label_at(i - 1, j) != label) ||
                              (i == w - 1 || label_at(i + 1, j) != label) ||
                              (j == 0 || label_at(i, j - 1) != label) ||
                              (j == h - 1 || label_at(i, j + 1) != label);
        if (boundary) {
          const auto color = class_color(static_cast<int>(label));
          r = color[0];
          g = color[1];
          b = color[2];
        }
      }
      const std::size_t px = (static_cast<std::size_t>(j) * static_cast<std::size_t>(w) +
                              static_cast<std::size_t>(i)) * 3;
      rgb[px] = r;
      rgb[px + 1] = g;
      rgb[px + 2] = b;
    }

  write_png(path, w, h, rgb);
}

}  // namespace atlaseg
