#include "m2m/association_file.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "m2m/error.hpp"

namespace m2m {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw InputError("field " + (where.empty() ? std::string("/") : where) + ": " + what);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double as_double(const json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const std::string& s = j.get_ref<const std::string&>();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail(where, "not a number: \"" + s + "\"");
    return v;
  }
  fail(where, "expected a number or numeric string");
}

long long as_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) fail(where, "expected an integer");
  return j.get<long long>();
}

const json& member(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) fail(where, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) fail(where, std::string("missing \"") + key + "\"");
  return *it;
}

const json& array_at(const json& j, const std::string& where, std::optional<std::size_t> size = {}) {
  if (!j.is_array()) fail(where, "expected an array");
  if (size && j.size() != *size) {
    fail(where, "expected " + std::to_string(*size) + " entries, found " + std::to_string(j.size()));
  }
  return j;
}

std::vector<double> doubles(const json& j, const std::string& where, std::optional<std::size_t> size) {
  array_at(j, where, size);
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(as_double(j[k], where + "/" + std::to_string(k)));
  return out;
}

Index index_in(const json& j, const std::string& where, std::size_t bound) {
  const long long v = as_int(j, where);
  if (v < 0 || static_cast<std::size_t>(v) >= bound) {
    fail(where, "index " + std::to_string(v) + " out of range [0, " + std::to_string(bound) + ")");
  }
  return static_cast<Index>(v);
}

CameraBlock parse_camera(const json& j, const std::string& where, std::vector<std::string>* warnings) {
  CameraBlock cam;
  if (!j.is_object()) fail(where, "expected an object");

  if (j.contains("intrinsics")) {
    const auto k = doubles(j["intrinsics"], where + "/intrinsics", 9);
    Mat3 m;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m(r, c) = k[3 * r + c];
    }
    if (std::abs(m.determinant()) < 1e-12) fail(where + "/intrinsics", "singular matrix");
    cam.intrinsics = m;
  }
  if (j.contains("pixels")) {
    const std::string w = where + "/pixels";
    const json& px = array_at(j["pixels"], w);
    std::vector<Vec2> pts;
    for (std::size_t k = 0; k < px.size(); ++k) {
      const auto uv = doubles(px[k], w + "/" + std::to_string(k), 2);
      pts.emplace_back(uv[0], uv[1]);
    }
    cam.pixels = std::move(pts);
  }
  if (j.contains("bearings")) {
    const std::string w = where + "/bearings";
    const json& bs = array_at(j["bearings"], w);
    for (std::size_t k = 0; k < bs.size(); ++k) {
      const std::string wk = w + "/" + std::to_string(k);
      const auto v = doubles(bs[k], wk, 3);
      Vec3 b(v[0], v[1], v[2]);
      const double n = b.norm();
      if (!(n > 0.0) || !std::isfinite(n)) fail(wk, "bearing has zero or non-finite length");
      if (std::abs(n - 1.0) > 1e-6 && warnings != nullptr) {
        warnings->push_back(wk + ": bearing norm " + fmt(n) + " renormalised");
      }
      if (std::abs(n - 1.0) > 1e-12) b /= n;
      cam.bearings.push_back(b);
    }
  } else if (cam.pixels && cam.intrinsics) {
    for (const Vec2& p : *cam.pixels) cam.bearings.push_back(pixel_to_bearing(*cam.intrinsics, p));
  } else {
    fail(where, "needs \"bearings\" or both \"pixels\" and \"intrinsics\"");
  }
  if (cam.pixels && cam.pixels->size() != cam.bearings.size()) {
    fail(where + "/pixels", "count differs from the bearing count");
  }
  if (j.contains("descriptors")) {
    const std::string w = where + "/descriptors";
    const json& ds = array_at(j["descriptors"], w, cam.bearings.size());
    std::size_t dim = 0;
    Eigen::MatrixXd d;
    for (std::size_t k = 0; k < ds.size(); ++k) {
      const std::string wk = w + "/" + std::to_string(k);
      const auto row = doubles(ds[k], wk, k == 0 ? std::nullopt : std::optional<std::size_t>(dim));
      if (k == 0) {
        dim = row.size();
        d.resize(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(dim));
      }
      for (std::size_t c = 0; c < dim; ++c) d(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = row[c];
    }
    cam.descriptors = std::move(d);
  }
  return cam;
}

std::size_t line_of(const std::string& text, std::size_t byte, std::size_t* column) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t k = 0; k < byte && k < text.size(); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  *column = col;
  return line;
}

json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Vec3 pixel_to_bearing(const Mat3& intrinsics, const Vec2& pixel) {
  const Vec3 ray = intrinsics.inverse() * Vec3(pixel.x(), pixel.y(), 1.0);
  return ray.normalized();
}

AssociationFile parse_association_file(const std::string& text, std::vector<std::string>* warnings) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t col = 0;
    const std::size_t line = line_of(text, e.byte == 0 ? 0 : e.byte - 1, &col);
    throw InputError("line " + std::to_string(line) + ", column " + std::to_string(col) +
                     ": malformed JSON");
  }

  AssociationFile f;
  const long long version = as_int(member(doc, "version", ""), "/version");
  if (version != kAssociationFileVersion) {
    fail("/version", "unsupported version " + std::to_string(version));
  }
  f.version = static_cast<int>(version);

  const json& cams = array_at(member(doc, "cameras", ""), "/cameras", 2);
  for (std::size_t c = 0; c < 2; ++c) {
    f.cameras[c] = parse_camera(cams[c], "/cameras/" + std::to_string(c), warnings);
  }
  const std::size_t nl = f.cameras[0].bearings.size();
  const std::size_t nr = f.cameras[1].bearings.size();

  if (doc.contains("edges")) {
    const json& es = array_at(doc["edges"], "/edges");
    std::vector<Edge> edges;
    for (std::size_t k = 0; k < es.size(); ++k) {
      const std::string w = "/edges/" + std::to_string(k);
      const json& e = array_at(es[k], w, 3);
      Edge ed;
      ed.i = index_in(e[0], w + "/0", nl);
      ed.j = index_in(e[1], w + "/1", nr);
      ed.similarity = as_double(e[2], w + "/2");
      if (!(ed.similarity >= -1.0 && ed.similarity <= 1.0)) fail(w + "/2", "similarity outside [-1, 1]");
      edges.push_back(ed);
    }
    f.edges = std::move(edges);
  }

  if (doc.contains("ground_truth")) {
    const json& g = doc["ground_truth"];
    const std::string w = "/ground_truth";
    GroundTruth gt;
    const auto r = doubles(member(g, "R", w), w + "/R", 9);
    const auto t = doubles(member(g, "t", w), w + "/t", 3);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) gt.pose.R(i, j) = r[3 * i + j];
    }
    gt.pose.t = Vec3(t[0], t[1], t[2]);
    if (!gt.pose.is_valid(1e-6)) fail(w, "R is not a rotation or t is not a unit vector");
    if (g.contains("matches")) {
      const json& ms = array_at(g["matches"], w + "/matches");
      for (std::size_t k = 0; k < ms.size(); ++k) {
        const std::string wk = w + "/matches/" + std::to_string(k);
        const json& m = array_at(ms[k], wk, 2);
        gt.matches.emplace_back(index_in(m[0], wk + "/0", nl), index_in(m[1], wk + "/1", nr));
      }
    }
    try {
      gt.validate();
    } catch (const InputError& e) {
      fail(w + "/matches", e.what());
    }
    f.truth = std::move(gt);
  }
  return f;
}

AssociationFile read_association_file(const std::filesystem::path& path,
                                      std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_association_file(ss.str(), warnings);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string format_association_file(const AssociationFile& file) {
  json doc;
  doc["version"] = file.version;
  json cams = json::array();
  for (const CameraBlock& cam : file.cameras) {
    json c;
    json bs = json::array();
    for (const Bearing& b : cam.bearings) bs.push_back({fmt(b.x()), fmt(b.y()), fmt(b.z())});
    c["bearings"] = std::move(bs);
    if (cam.pixels) {
      json px = json::array();
      for (const Vec2& p : *cam.pixels) px.push_back({fmt(p.x()), fmt(p.y())});
      c["pixels"] = std::move(px);
    }
    if (cam.intrinsics) {
      json k = json::array();
      for (int r = 0; r < 3; ++r) {
        for (int col = 0; col < 3; ++col) k.push_back(fmt((*cam.intrinsics)(r, col)));
      }
      c["intrinsics"] = std::move(k);
    }
    if (cam.descriptors) c["descriptors"] = matrix_rows(*cam.descriptors);
    cams.push_back(std::move(c));
  }
  doc["cameras"] = std::move(cams);
  if (file.edges) {
    json es = json::array();
    for (const Edge& e : *file.edges) es.push_back({e.i, e.j, fmt(e.similarity)});
    doc["edges"] = std::move(es);
  }
  if (file.truth) {
    json g;
    json r = json::array();
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) r.push_back(fmt(file.truth->pose.R(i, j)));
    }
    g["R"] = std::move(r);
    g["t"] = {fmt(file.truth->pose.t.x()), fmt(file.truth->pose.t.y()), fmt(file.truth->pose.t.z())};
    json ms = json::array();
    for (const MatchPair& m : file.truth->matches) ms.push_back({m.first, m.second});
    g["matches"] = std::move(ms);
    doc["ground_truth"] = std::move(g);
  }
  return doc.dump(1) + "\n";
}

void write_association_file(const std::filesystem::path& path, const AssociationFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << format_association_file(file);
  if (!out) throw InputError("write failed for " + path.string());
}

AssociationGraph build_graph(const AssociationFile& file, const MknnOptions& mknn) {
  std::vector<Edge> edges;
  if (file.edges) {
    edges = *file.edges;
    if (mknn.max_edges > 0) edges = cap_edges(std::move(edges), mknn.max_edges);
  } else if (file.cameras[0].descriptors && file.cameras[1].descriptors) {
    edges = build_mknn(*file.cameras[0].descriptors, *file.cameras[1].descriptors, mknn);
  } else {
    throw InputError("file has neither edges nor descriptors on both cameras");
  }
  return AssociationGraph(file.cameras[0].bearings, file.cameras[1].bearings, std::move(edges));
}

}  // namespace m2m
