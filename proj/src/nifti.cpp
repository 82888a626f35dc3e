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
#include "atlaseg/nifti.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <unordered_map>

#include <zlib.h>

namespace atlaseg {

namespace {

#pragma pack(push, 1)
struct NiftiHeader {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header must be 348 bytes");

enum : std::int16_t {
  kDtUint8 = 2,
  kDtInt16 = 4,
  kDtInt32 = 8,
  kDtFloat32 = 16,
  kDtFloat64 = 64,
};

void swap16(void* p) {
  auto* b = static_cast<unsigned char*>(p);
  std::swap(b[0], b[1]);
}
void swap32(void* p) {
  auto* b = static_cast<unsigned char*>(p);
  std::swap(b[0], b[3]);
  std::swap(b[1], b[2]);
}
void swap64(void* p) {
  auto* b = static_cast<unsigned char*>(p);
  std::swap(b[0], b[7]);
  std::swap(b[1], b[6]);
  std::swap(b[2], b[5]);
  std::swap(b[3], b[4]);
}

void swap_header(NiftiHeader& h) {
  swap32(&h.sizeof_hdr);
  swap32(&h.extents);
  swap16(&h.session_error);
  for (auto& d : h.dim) swap16(&d);
  swap32(&h.intent_p1);
  swap32(&h.intent_p2);
  swap32(&h.intent_p3);
  swap16(&h.intent_code);
  swap16(&h.datatype);
  swap16(&h.bitpix);
  swap16(&h.slice_start);
  for (auto& d : h.pixdim) swap32(&d);
  swap32(&h.vox_offset);
  swap32(&h.scl_slope);
  swap32(&h.scl_inter);
  swap16(&h.slice_end);
  swap32(&h.cal_max);
  swap32(&h.cal_min);
  swap32(&h.slice_duration);
  swap32(&h.toffset);
  swap32(&h.glmax);
  swap32(&h.glmin);
  swap16(&h.qform_code);
  swap16(&h.sform_code);
  swap32(&h.quatern_b);
  swap32(&h.quatern_c);
  swap32(&h.quatern_d);
  swap32(&h.qoffset_x);
  swap32(&h.qoffset_y);
  swap32(&h.qoffset_z);
  for (auto& v : h.srow_x) swap32(&v);
  for (auto& v : h.srow_y) swap32(&v);
  for (auto& v : h.srow_z) swap32(&v);
}

class GzFile {
 public:
  GzFile(const std::string& path, const char* mode) : path_(path) {
    f_ = gzopen(path.c_str(), mode);
    if (!f_) throw DataError("cannot open file: " + path);
  }
  ~GzFile() {
    if (f_) gzclose(f_);
  }
  GzFile(const GzFile&) = delete;
  GzFile& operator=(const GzFile&) = delete;

  void read(void* buf, std::size_t n) {
    auto* p = static_cast<unsigned char*>(buf);
    while (n > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 24));
      const int got = gzread(f_, p, chunk);
      if (got <= 0) throw DataError("truncated or corrupt file: " + path_);
      p += got;
      n -= static_cast<std::size_t>(got);
    }
  }

  void write(const void* buf, std::size_t n) {
    auto* p = static_cast<const unsigned char*>(buf);
    while (n > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 24));
      if (gzwrite(f_, p, chunk) != static_cast<int>(chunk))
        throw DataError("write failed: " + path_);
      p += chunk;
      n -= chunk;
    }
  }

 private:
  std::string path_;
  gzFile f_ = nullptr;
};

bool gz_path(const std::string& path) {
  return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

struct RawVolume {
  Grid3 grid;
  int channels = 1;
  ArrayXd data;  // x-fastest, channel-slowest
  bool scaled = false;
};

RawVolume read_nifti(const std::string& path, bool apply_scaling) {
  GzFile f(path, "rb");
  NiftiHeader h{};
  f.read(&h, sizeof(h));

  bool swapped = false;
  if (h.sizeof_hdr != 348) {
    swap_header(h);
    swapped = true;
    if (h.sizeof_hdr != 348) throw DataError("not a NIfTI-1 file: " + path);
  }
  if (std::strncmp(h.magic, "n+1", 3) != 0) {
    if (std::strncmp(h.magic, "ni1", 3) == 0)
      throw DataError("two-file NIfTI (.hdr/.img) is not supported: " + path);
    throw DataError("bad NIfTI magic: " + path);
  }

  const int ndim = h.dim[0];
  if (ndim < 3 || ndim > 7) throw DataError("unsupported dimensionality: " + path);
  int channels = 1;
  for (int d = 4; d <= ndim; ++d) {
    const int extent = h.dim[d];
    if (extent <= 1) continue;
    if (d == 4 && channels == 1) {
      channels = extent;
    } else {
      throw DataError("volume has non-singleton dimensions beyond the fourth: " + path);
    }
  }

  RawVolume out;
  out.channels = channels;
  out.grid.dims = {h.dim[1], h.dim[2], h.dim[3]};
  for (int a = 0; a < 3; ++a)
    if (out.grid.dims[a] < 1) throw DataError("non-positive dimension in header: " + path);

  if (h.sform_code > 0) {
    const float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
    for (int a = 0; a < 3; ++a) {
      double s2 = 0.0;
      for (int r = 0; r < 3; ++r) s2 += static_cast<double>(rows[r][a]) * rows[r][a];
      out.grid.spacing[a] = std::sqrt(s2);
      out.grid.origin[a] = rows[a][3];
    }
  } else if (h.qform_code > 0) {
    for (int a = 0; a < 3; ++a) out.grid.spacing[a] = std::abs(h.pixdim[a + 1]);
    out.grid.origin = {h.qoffset_x, h.qoffset_y, h.qoffset_z};
  } else {
    for (int a = 0; a < 3; ++a) out.grid.spacing[a] = std::abs(h.pixdim[a + 1]);
    out.grid.origin.setZero();
  }
  for (int a = 0; a < 3; ++a)
    if (!(out.grid.spacing[a] > 0.0)) out.grid.spacing[a] = 1.0;

  const std::int64_t n = out.grid.voxel_count() * channels;
  std::size_t elem = 0;
  switch (h.datatype) {
    case kDtUint8: elem = 1; break;
    case kDtInt16: elem = 2; break;
    case kDtInt32: elem = 4; break;
    case kDtFloat32: elem = 4; break;
    case kDtFloat64: elem = 8; break;
    default:
      throw DataError("unsupported NIfTI datatype " + std::to_string(h.datatype) + ": " + path);
  }

  const long offset = static_cast<long>(h.vox_offset);
  if (offset < 348) throw DataError("bad vox_offset in header: " + path);
  if (offset > 348) {
    std::vector<char> skip(static_cast<std::size_t>(offset - 348));
    f.read(skip.data(), skip.size());
  }

  std::vector<unsigned char> raw(static_cast<std::size_t>(n) * elem);
  f.read(raw.data(), raw.size());

  out.data.resize(n);
  switch (h.datatype) {
    case kDtUint8:
      for (std::int64_t i = 0; i < n; ++i) out.data[i] = raw[static_cast<std::size_t>(i)];
      break;
    case kDtInt16:
      for (std::int64_t i = 0; i < n; ++i) {
        std::int16_t v;
        std::memcpy(&v, raw.data() + 2 * i, 2);
        if (swapped) swap16(&v);
        out.data[i] = v;
      }
      break;
    case kDtInt32:
      for (std::int64_t i = 0; i < n; ++i) {
        std::int32_t v;
        std::memcpy(&v, raw.data() + 4 * i, 4);
        if (swapped) swap32(&v);
        out.data[i] = v;
      }
      break;
    case kDtFloat32:
      for (std::int64_t i = 0; i < n; ++i) {
        float v;
        std::memcpy(&v, raw.data() + 4 * i, 4);
        if (swapped) swap32(&v);
        out.data[i] = v;
      }
      break;
    case kDtFloat64:
      for (std::int64_t i = 0; i < n; ++i) {
        double v;
        std::memcpy(&v, raw.data() + 8 * i, 8);
        if (swapped) swap64(&v);
        out.data[i] = v;
      }
      break;
  }

  if (apply_scaling && h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f)) {
    out.data = out.data * static_cast<double>(h.scl_slope) + static_cast<double>(h.scl_inter);
    out.scaled = true;
  }
  return out;
}

NiftiHeader make_header(const Grid3& grid, int channels, std::int16_t datatype, std::int16_t bitpix) {
  NiftiHeader h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = static_cast<std::int16_t>(channels > 1 ? 4 : 3);
  h.dim[1] = static_cast<std::int16_t>(grid.dims[0]);
  h.dim[2] = static_cast<std::int16_t>(grid.dims[1]);
  h.dim[3] = static_cast<std::int16_t>(grid.dims[2]);
  h.dim[4] = static_cast<std::int16_t>(channels > 1 ? channels : 1);
  for (int d = 5; d < 8; ++d) h.dim[d] = 1;
  h.datatype = datatype;
  h.bitpix = bitpix;
  h.pixdim[0] = 1.0f;
  for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = static_cast<float>(grid.spacing[a]);
  h.pixdim[4] = 1.0f;
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.xyzt_units = 2;  // millimetres
  h.sform_code = 1;
  h.qform_code = 0;
  h.srow_x[0] = static_cast<float>(grid.spacing[0]);
  h.srow_y[1] = static_cast<float>(grid.spacing[1]);
  h.srow_z[2] = static_cast<float>(grid.spacing[2]);
  h.srow_x[3] = static_cast<float>(grid.origin[0]);
  h.srow_y[3] = static_cast<float>(grid.origin[1]);
  h.srow_z[3] = static_cast<float>(grid.origin[2]);
  std::memcpy(h.magic, "n+1", 4);
  return h;
}

void write_nifti(const std::string& path, const NiftiHeader& h, const void* data, std::size_t bytes) {
  GzFile f(path, gz_path(path) ? "wb" : "wbT");
  f.write(&h, sizeof(h));
  const char pad[4] = {0, 0, 0, 0};
  f.write(pad, 4);
  f.write(data, bytes);
}

}  // namespace

ScalarVolume load_scalar_nifti(const std::string& path) {
  RawVolume raw = read_nifti(path, true);
  if (raw.channels != 1) throw DataError("expected a 3D volume, got multiple channels: " + path);
  ScalarVolume vol;
  vol.grid = raw.grid;
  vol.data = std::move(raw.data);
  vol.validate();
  return vol;
}

LabelVolume load_label_nifti(const std::string& path, const ClassMap& class_map) {
  validate_class_map(class_map);
  RawVolume raw = read_nifti(path, false);
  if (raw.channels != 1) throw DataError("expected a 3D label volume, got multiple channels: " + path);

  std::unordered_map<int, std::int32_t> to_id;
  for (std::size_t k = 0; k < class_map.size(); ++k)
    to_id[class_map[k]] = static_cast<std::int32_t>(k);

  LabelVolume vol(raw.grid, class_map);
  for (std::int64_t i = 0; i < raw.data.size(); ++i) {
    const double v = raw.data[i];
    const double r = std::round(v);
    if (std::abs(v - r) > 1e-9)
      throw DataError("label file contains non-integer value " + std::to_string(v) + ": " + path);
    const auto it = to_id.find(static_cast<int>(r));
    if (it == to_id.end())
      throw DataError("raw label value " + std::to_string(static_cast<long long>(r)) +
                      " is not in the class map: " + path);
    vol.data[static_cast<std::size_t>(i)] = it->second;
  }
  return vol;
}

void save_nifti(const ScalarVolume& vol, const std::string& path) {
  vol.validate();
  const NiftiHeader h = make_header(vol.grid, 1, kDtFloat64, 64);
  write_nifti(path, h, vol.data.data(), static_cast<std::size_t>(vol.data.size()) * 8);
}

void save_nifti(const LabelVolume& vol, const std::string& path) {
  vol.validate();
  std::vector<std::int16_t> raw(vol.data.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    raw[i] = static_cast<std::int16_t>(vol.class_map[static_cast<std::size_t>(vol.data[i])]);
  const NiftiHeader h = make_header(vol.grid, 1, kDtInt16, 16);
  write_nifti(path, h, raw.data(), raw.size() * 2);
}

std::vector<ScalarVolume> load_nifti_channels(const std::string& path) {
  RawVolume raw = read_nifti(path, true);
  const std::int64_t per = raw.grid.voxel_count();
  std::vector<ScalarVolume> out;
  out.reserve(static_cast<std::size_t>(raw.channels));
  for (int c = 0; c < raw.channels; ++c) {
    ScalarVolume vol;
    vol.grid = raw.grid;
    vol.data = raw.data.segment(per * c, per);
    vol.validate();
    out.push_back(std::move(vol));
  }
  return out;
}

void save_nifti_channels(const std::vector<ScalarVolume>& channels, const std::string& path) {
  if (channels.empty()) throw DataError("no channels to save");
  for (const auto& c : channels) {
    c.validate();
    if (!c.grid.same_as(channels.front().grid)) throw DataError("channel grids differ");
  }
  const std::int64_t per = channels.front().grid.voxel_count();
  ArrayXd all(per * static_cast<std::int64_t>(channels.size()));
  for (std::size_t c = 0; c < channels.size(); ++c)
    all.segment(per * static_cast<std::int64_t>(c), per) = channels[c].data;
  const NiftiHeader h =
      make_header(channels.front().grid, static_cast<int>(channels.size()), kDtFloat64, 64);
  write_nifti(path, h, all.data(), static_cast<std::size_t>(all.size()) * 8);
}

}  // namespace atlaseg
