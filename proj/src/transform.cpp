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
#include "atlaseg/transform.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace atlaseg {

double bspline3(double x) {
  const double ax = std::abs(x);
  if (ax < 1.0) return (4.0 - 6.0 * ax * ax + 3.0 * ax * ax * ax) / 6.0;
  if (ax < 2.0) {
    const double t = 2.0 - ax;
    return t * t * t / 6.0;
  }
  return 0.0;
}

double bspline3_derivative(double x) {
  const double ax = std::abs(x);
  const double sgn = (x < 0.0) ? -1.0 : 1.0;
  if (ax < 1.0) return sgn * (-2.0 * ax + 1.5 * ax * ax);
  if (ax < 2.0) {
    const double t = 2.0 - ax;
    return sgn * (-0.5 * t * t);
  }
  return 0.0;
}

std::array<double, 4> bspline3_weights(double u) {
  const double u2 = u * u;
  const double u3 = u2 * u;
  const double om = 1.0 - u;
  return {om * om * om / 6.0, (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
          (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0, u3 / 6.0};
}

std::array<double, 4> bspline3_derivative_weights(double u) {
  const double u2 = u * u;
  const double om = 1.0 - u;
  return {-0.5 * om * om, 1.5 * u2 - 2.0 * u, -1.5 * u2 + u + 0.5, 0.5 * u2};
}

AffineTransform AffineTransform::about_center(const Matrix3d& linear, const Vector3d& center,
                                              const Vector3d& extra_translation) {
  AffineTransform t;
  t.matrix = linear;
  t.translation = center - linear * center + extra_translation;
  return t;
}

Vector3d FfdTransform::displacement(const Vector3d& p) const {
  Vector3d d = Vector3d::Zero();
  for_each_support_weight(p, [&](std::int64_t row, double w) {
    d += w * coefficients.row(row).transpose();
  });
  return d;
}

void FfdTransform::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 4) throw DataError("control grid needs at least 4 points per axis");
    if (!(spacing[a] > 0.0)) throw DataError("control grid spacing must be positive");
  }
  if (coefficients.rows() != control_count()) throw DataError("coefficient count does not match control grid");
  if (!coefficients.allFinite()) throw DataError("control coefficients contain non-finite values");
}

FfdTransform FfdTransform::for_grid(const Grid3& ref, double knots_in_voxels) {
  ref.validate();
  if (!(knots_in_voxels > 0.0)) throw DataError("knot spacing must be positive");
  FfdTransform f;
  f.spacing = ref.spacing * knots_in_voxels;
  // one knot of margin below, two above, so every point of the reference
  // domain has a full 4x4x4 support neighborhood
  f.origin = ref.origin - f.spacing;
  for (int a = 0; a < 3; ++a) {
    const double extent = (ref.dims[a] - 1) * ref.spacing[a];
    f.dims[a] = static_cast<int>(std::ceil(extent / f.spacing[a])) + 4;
  }
  f.coefficients = CoeffMatrix::Zero(f.control_count(), 3);
  return f;
}

namespace {

// cubic subdivision along one axis: n points at spacing h become 2n+3 points
// at spacing h/2 describing the same field, with the new origin one coarse
// knot lower. Out-of-range coarse coefficients count as zero.
void refine_axis(const std::vector<Vector3d>& in, std::vector<Vector3d>& out) {
  const std::int64_t n = static_cast<std::int64_t>(in.size());
  out.assign(static_cast<std::size_t>(2 * n + 3), Vector3d::Zero());
  auto coarse = [&](std::int64_t i) -> Vector3d {
    return (i < 0 || i >= n) ? Vector3d::Zero() : in[static_cast<std::size_t>(i)];
  };
  for (std::int64_t j = -2; j <= 2 * n; ++j) {
    Vector3d v;
    if (j % 2 == 0) {
      const std::int64_t i = j / 2;
      v = (coarse(i - 1) + 6.0 * coarse(i) + coarse(i + 1)) / 8.0;
    } else {
      const std::int64_t i = (j - 1) / 2;
      v = (coarse(i) + coarse(i + 1)) / 2.0;
    }
    out[static_cast<std::size_t>(j + 2)] = v;
  }
}

}  // namespace

FfdTransform FfdTransform::refined() const {
  validate();
  FfdTransform f;
  f.spacing = spacing / 2.0;
  f.origin = origin - spacing;
  for (int a = 0; a < 3; ++a) f.dims[a] = 2 * dims[a] + 3;

  // tensor product refinement, one axis at a time
  std::vector<Vector3d> buf_in, buf_out;
  CoeffMatrix work = coefficients;
  Vector3i d = dims;

  for (int axis = 0; axis < 3; ++axis) {
    Vector3i nd = d;
    nd[axis] = 2 * d[axis] + 3;
    CoeffMatrix next(static_cast<std::int64_t>(nd[0]) * nd[1] * nd[2], 3);
    auto idx = [](const Vector3i& dd, std::int64_t i, std::int64_t j, std::int64_t k) {
      return i + dd[0] * (j + static_cast<std::int64_t>(dd[1]) * k);
    };
    const int n0 = (axis == 0) ? 1 : d[0];
    const int n1 = (axis == 1) ? 1 : d[1];
    const int n2 = (axis == 2) ? 1 : d[2];
    for (int k = 0; k < n2; ++k)
      for (int j = 0; j < n1; ++j)
        for (int i = 0; i < n0; ++i) {
          buf_in.resize(static_cast<std::size_t>(d[axis]));
          for (int t = 0; t < d[axis]; ++t) {
            const std::int64_t src = (axis == 0)   ? idx(d, t, j, k)
                                     : (axis == 1) ? idx(d, i, t, k)
                                                   : idx(d, i, j, t);
            buf_in[static_cast<std::size_t>(t)] = work.row(src).transpose();
          }
          refine_axis(buf_in, buf_out);
          for (int t = 0; t < nd[axis]; ++t) {
            const std::int64_t dst = (axis == 0)   ? idx(nd, t, j, k)
                                     : (axis == 1) ? idx(nd, i, t, k)
                                                   : idx(nd, i, j, t);
            next.row(dst) = buf_out[static_cast<std::size_t>(t)].transpose();
          }
        }
    work = std::move(next);
    d = nd;
  }

  f.coefficients = std::move(work);
  return f;
}

namespace {

nlohmann::json vec3_json(const Vector3d& v) { return {v[0], v[1], v[2]}; }
nlohmann::json vec3i_json(const Vector3i& v) { return {v[0], v[1], v[2]}; }

Vector3d json_vec3(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw DataError(std::string("transform file: bad ") + what);
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Vector3i json_vec3i(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw DataError(std::string("transform file: bad ") + what);
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

}  // namespace

std::string serialize(const TransformChain& chain) {
  nlohmann::json j;
  j["version"] = 1;
  nlohmann::json m = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m.push_back(chain.affine.matrix(r, c));
  j["affine"]["matrix"] = m;
  j["affine"]["translation"] = vec3_json(chain.affine.translation);
  if (chain.ffd) {
    const FfdTransform& f = *chain.ffd;
    nlohmann::json jf;
    jf["dims"] = vec3i_json(f.dims);
    jf["spacing"] = vec3_json(f.spacing);
    jf["origin"] = vec3_json(f.origin);
    nlohmann::json coeffs = nlohmann::json::array();
    for (std::int64_t r = 0; r < f.coefficients.rows(); ++r)
      for (int c = 0; c < 3; ++c) coeffs.push_back(f.coefficients(r, c));
    jf["coefficients"] = std::move(coeffs);
    j["ffd"] = std::move(jf);
  }
  return j.dump(2);
}

TransformChain deserialize_transform(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("transform file is not valid JSON: ") + e.what());
  }
  if (!j.contains("version") || !j["version"].is_number_integer())
    throw DataError("transform file: missing version");
  if (j["version"].get<int>() != 1) throw DataError("transform file: unsupported version");
  if (!j.contains("affine")) throw DataError("transform file: missing affine");

  TransformChain chain;
  const auto& ja = j["affine"];
  if (!ja.contains("matrix") || !ja["matrix"].is_array() || ja["matrix"].size() != 9)
    throw DataError("transform file: bad affine matrix");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) chain.affine.matrix(r, c) = ja["matrix"][3 * r + c].get<double>();
  if (!ja.contains("translation")) throw DataError("transform file: missing affine translation");
  chain.affine.translation = json_vec3(ja["translation"], "affine translation");

  if (j.contains("ffd") && !j["ffd"].is_null()) {
    const auto& jf = j["ffd"];
    FfdTransform f;
    if (!jf.contains("dims") || !jf.contains("spacing") || !jf.contains("origin") ||
        !jf.contains("coefficients"))
      throw DataError("transform file: incomplete ffd block");
    f.dims = json_vec3i(jf["dims"], "ffd dims");
    f.spacing = json_vec3(jf["spacing"], "ffd spacing");
    f.origin = json_vec3(jf["origin"], "ffd origin");
    const auto& jc = jf["coefficients"];
    const std::int64_t n = f.control_count();
    if (!jc.is_array() || static_cast<std::int64_t>(jc.size()) != 3 * n)
      throw DataError("transform file: coefficient count does not match dims");
    f.coefficients.resize(n, 3);
    for (std::int64_t r = 0; r < n; ++r)
      for (int c = 0; c < 3; ++c) f.coefficients(r, c) = jc[3 * r + c].get<double>();
    f.validate();
    chain.ffd = std::move(f);
  }
  return chain;
}

void save_transform(const TransformChain& chain, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open transform file for writing: " + path);
  out << serialize(chain) << "\n";
  if (!out) throw DataError("failed writing transform file: " + path);
}

TransformChain load_transform(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open transform file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_transform(text);
}

}  // namespace atlaseg
