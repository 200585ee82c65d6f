#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "m2m/association.hpp"
#include "m2m/geometry.hpp"

namespace m2m {

inline constexpr int kAssociationFileVersion = 1;

struct CameraBlock {
  std::vector<Bearing> bearings;
  std::optional<std::vector<Vec2>> pixels;  // (u, v)
  std::optional<Mat3> intrinsics;           // K
  std::optional<Eigen::MatrixXd> descriptors;  // one row per feature
};

/// On-disk association document: two cameras, an optional edge list (else
/// edges come from descriptors via MKNN), optional ground truth.
struct AssociationFile {
  int version = kAssociationFileVersion;
  std::array<CameraBlock, 2> cameras;
  std::optional<std::vector<Edge>> edges;
  std::optional<GroundTruth> truth;
};

/// Parses and validates a document. Syntax errors report line and column,
/// schema errors the JSON pointer of the offending field; both throw
/// InputError. Bearings off unit length by more than 1e-6 are renormalised
/// and reported through `warnings`. Pixels with intrinsics fill in missing
/// bearings as normalize(K^-1 [u, v, 1]).
AssociationFile parse_association_file(const std::string& text,
                                       std::vector<std::string>* warnings = nullptr);
AssociationFile read_association_file(const std::filesystem::path& path,
                                      std::vector<std::string>* warnings = nullptr);

/// Serialises with bearings, similarities and pose entries as %.17g strings.
std::string format_association_file(const AssociationFile& file);
void write_association_file(const std::filesystem::path& path, const AssociationFile& file);

/// Graph from the file's edges, or MKNN over its descriptors when the file
/// has no edge list.
AssociationGraph build_graph(const AssociationFile& file, const MknnOptions& mknn = {});

Vec3 pixel_to_bearing(const Mat3& intrinsics, const Vec2& pixel);

}  // namespace m2m
