#include <doctest.h>

#include <filesystem>
#include <string>

#include "m2m/association_file.hpp"
#include "m2m/error.hpp"
#include "m2m/evaluation.hpp"
#include "oracles.hpp"

using namespace m2m;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_association_file(text);
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

AssociationFile from_scene(std::uint64_t seed) {
  SceneConfig c;
  c.seed = seed;
  c.num_points = 20;
  c.noise_deg = 0.3;
  const SyntheticScene s = generate_scene(c);
  AssociationFile f;
  f.cameras[0].bearings = s.graph.left();
  f.cameras[1].bearings = s.graph.right();
  f.edges = s.graph.edges();
  f.truth = s.truth;
  return f;
}

const char* kSmall = R"({
  "version": 1,
  "cameras": [
    {"bearings": [[0, 0, 1], [1, 0, 0]]},
    {"bearings": [[0, 0, 1]]}
  ],
  "edges": [[0, 0, 0.9], [1, 0, "0.5"]]
})";

}  // namespace

TEST_CASE("round trip is lossless") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const AssociationFile f = from_scene(seed);
    const AssociationFile g = parse_association_file(format_association_file(f));
    CHECK(g.cameras[0].bearings == f.cameras[0].bearings);
    CHECK(g.cameras[1].bearings == f.cameras[1].bearings);
    CHECK(*g.edges == *f.edges);
    CHECK(g.truth->matches == f.truth->matches);
    CHECK(g.truth->pose.R == f.truth->pose.R);
    CHECK(g.truth->pose.t == f.truth->pose.t);
  }
}

TEST_CASE("file round trip") {
  const AssociationFile f = from_scene(4);
  const auto path = std::filesystem::temp_directory_path() / "m2m_round_trip.json";
  write_association_file(path, f);
  const AssociationFile g = read_association_file(path);
  std::filesystem::remove(path);
  CHECK(*g.edges == *f.edges);
  CHECK_THROWS_AS(read_association_file(path), InputError);
}

TEST_CASE("small document") {
  const AssociationFile f = parse_association_file(kSmall);
  CHECK(f.cameras[0].bearings.size() == 2);
  REQUIRE(f.edges.has_value());
  CHECK((*f.edges)[1].similarity == 0.5);
  CHECK_FALSE(f.truth.has_value());
  const AssociationGraph g = build_graph(f);
  CHECK(g.num_edges() == 2);
  CHECK(g.num_right() == 1);
}

TEST_CASE("syntax errors report line and column") {
  const std::string msg = error_of("{\n  \"version\": 1,\n  \"cameras\": [\n}");
  CHECK(msg.find("line 4") != std::string::npos);
  CHECK(msg.find("column") != std::string::npos);
}

TEST_CASE("schema errors report the field") {
  std::string doc = kSmall;
  CHECK(error_of(std::string(doc).replace(doc.find("\"version\": 1"), 12, "\"version\": 2")).find("/version") !=
        std::string::npos);
  CHECK(error_of(std::string(doc).replace(doc.find("[1, 0, \"0.5\"]"), 13, "[1, 3, 0.5]")).find("/edges/1/1") !=
        std::string::npos);
  CHECK(error_of(std::string(doc).replace(doc.find("\"0.5\""), 5, "\"x\"")).find("/edges/1/2") != std::string::npos);
  CHECK(error_of(std::string(doc).replace(doc.find("0.9"), 3, "1.5")).find("/edges/0/2") != std::string::npos);
  CHECK(error_of(R"({"version": 1, "cameras": [{}, {}]})").find("/cameras/0") != std::string::npos);
  CHECK(error_of(R"({"cameras": []})").find("version") != std::string::npos);
  CHECK(error_of(R"({"version": 1, "cameras": [{"bearings": []}]})").find("/cameras") != std::string::npos);
}

TEST_CASE("ground truth is validated") {
  const std::string bad = R"({"version": 1,
    "cameras": [{"bearings": [[0, 0, 1]]}, {"bearings": [[0, 0, 1]]}],
    "edges": [],
    "ground_truth": {"R": [1, 0, 0, 0, 1, 0, 0, 0, 1], "t": [0, 0, 2]}})";
  CHECK(error_of(bad).find("/ground_truth") != std::string::npos);
  const std::string dup = R"({"version": 1,
    "cameras": [{"bearings": [[0, 0, 1]]}, {"bearings": [[0, 0, 1], [1, 0, 0]]}],
    "ground_truth": {"R": [1, 0, 0, 0, 1, 0, 0, 0, 1], "t": [0, 0, 1], "matches": [[0, 0], [0, 1]]}})";
  CHECK(error_of(dup).find("/ground_truth/matches") != std::string::npos);
}

TEST_CASE("bearings off unit length are renormalised with a warning") {
  const std::string doc = R"({"version": 1,
    "cameras": [{"bearings": [[0, 0, 2], [0, 0, 1.0000000001]]}, {"bearings": [[3, 4, 0]]}],
    "edges": [[0, 0, 1]]})";
  std::vector<std::string> warnings;
  const AssociationFile f = parse_association_file(doc, &warnings);
  CHECK(warnings.size() == 2);
  CHECK(warnings[0].find("/cameras/0/bearings/0") != std::string::npos);
  CHECK((f.cameras[0].bearings[0] - Vec3::UnitZ()).norm() < 1e-15);
  CHECK((f.cameras[1].bearings[0] - Vec3(0.6, 0.8, 0.0)).norm() < 1e-15);
}

TEST_CASE("pixels with intrinsics give bearings") {
  Mat3 k;
  k << 500, 0, 320, 0, 500, 240, 0, 0, 1;
  CHECK((pixel_to_bearing(k, Vec2(320, 240)) - Vec3::UnitZ()).norm() < 1e-15);
  CHECK((pixel_to_bearing(k, Vec2(820, 240)) - Vec3(1, 0, 1).normalized()).norm() < 1e-15);

  const std::string doc = R"({"version": 1,
    "cameras": [
      {"pixels": [[320, 240], [820, 240]], "intrinsics": [500, 0, 320, 0, 500, 240, 0, 0, 1]},
      {"bearings": [[0, 0, 1]]}],
    "edges": [[1, 0, 0.8]]})";
  const AssociationFile f = parse_association_file(doc);
  CHECK((f.cameras[0].bearings[1] - Vec3(1, 0, 1).normalized()).norm() < 1e-15);
  REQUIRE(f.cameras[0].pixels.has_value());
  CHECK(f.cameras[0].pixels->size() == 2);
  CHECK(f.cameras[0].intrinsics.has_value());
}

TEST_CASE("descriptors build the graph by mutual nearest neighbours") {
  const std::string doc = R"({"version": 1,
    "cameras": [
      {"bearings": [[0, 0, 1], [1, 0, 0], [0, 1, 0]], "descriptors": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]},
      {"bearings": [[0, 0, 1], [1, 0, 0], [0, 1, 0]], "descriptors": [[0, 1, 0], [1, 0, 0], [0, 0, 1]]}]})";
  const AssociationFile f = parse_association_file(doc);
  CHECK_FALSE(f.edges.has_value());
  const AssociationGraph g = build_graph(f, {1, 0.5});
  REQUIRE(g.num_edges() == 3);
  CHECK(g.find_edge(0, 1).has_value());
  CHECK(g.find_edge(1, 0).has_value());
  CHECK(g.find_edge(2, 2).has_value());
  CHECK(format_association_file(f).find("descriptors") != std::string::npos);

  const std::string bare = R"({"version": 1,
    "cameras": [{"bearings": [[0, 0, 1]]}, {"bearings": [[0, 0, 1]]}]})";
  CHECK_THROWS_AS(build_graph(parse_association_file(bare)), InputError);
}
