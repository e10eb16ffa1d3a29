#pragma once

#include "okf/kf_core.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace okf {

/// Paired true states and observations of one target, time-major.
struct SupervisedTrajectory {
  std::string id;
  SeqMat states;
  SeqMat observations;

  int length() const { return static_cast<int>(states.rows()); }
  Vec state(int t) const { return states.row(t).transpose(); }
  Vec observation(int t) const { return observations.row(t).transpose(); }
};

struct Dataset {
  std::vector<SupervisedTrajectory> trajectories;
  int dim_x = 0;
  int dim_z = 0;
  nlohmann::json metadata = nlohmann::json::object();

  size_t size() const { return trajectories.size(); }
  bool empty() const { return trajectories.empty(); }
  /// Throws SchemaError when an invariant is broken.
  void validate() const;
};

bool operator==(const SupervisedTrajectory& a, const SupervisedTrajectory& b);
bool operator==(const Dataset& a, const Dataset& b);

/// First `n` trajectories, metadata preserved.
Dataset head(const Dataset& ds, size_t n);
/// Trajectories at the given positions, in that order.
Dataset select(const Dataset& ds, const std::vector<size_t>& indices);

inline constexpr char kDatasetMagic[5] = {'O', 'K', 'F', 'D', '1'};

/// Binary container: "OKFD1", u64 little-endian header length, UTF-8 JSON
/// header, then per trajectory its states and observations as row-major
/// little-endian float64. The file is written to a temporary and renamed.
void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

/// Flat text export (17 significant digits): trajectory,t,x0..,z0..
void export_csv(const Dataset& ds, const std::filesystem::path& path);

struct MotImportOptions {
  /// Classes kept when rows carry a class column (MOT20: 1 = pedestrian).
  std::vector<int> classes{1};
  /// Drop rows whose "consider" flag (column 7) is zero.
  bool require_consider_flag = true;
};

/// One row of a MOT ground-truth file.
struct MotRow {
  int frame = 0;
  int id = 0;
  double left = 0, top = 0, width = 0, height = 0;
  int consider = 1;
  int cls = 1;
  double visibility = 1.0;
};

std::vector<MotRow> parse_mot_file(const std::filesystem::path& file, const MotImportOptions& opts);
void write_mot_file(const std::filesystem::path& file, const std::vector<MotRow>& rows);

/// Name a MOT file contributes to trajectory ids: the sequence directory for
/// "<seq>/gt/gt.txt" layouts, the file stem otherwise.
std::string mot_sequence_name(const std::filesystem::path& file);

/// One trajectory per target and contiguous frame run. Observation is
/// (centre x, centre y, width, height); state appends (vx, vy) from backward
/// differences of the centre, the first step copying the second.
Dataset import_mot_groundtruth(const std::vector<std::filesystem::path>& files,
                               const MotImportOptions& opts = {});

struct MotSplit {
  std::vector<std::filesystem::path> train;
  std::vector<std::filesystem::path> test;
};

std::pair<Dataset, Dataset> import_mot_split(const MotSplit& split, const MotImportOptions& opts = {});

}  // namespace okf
