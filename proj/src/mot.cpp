#include "okf/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace okf {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if constexpr (std::is_integral_v<T>) {
    // MOT files sometimes write integers as "1.0" or "-1".
    double d = 0;
    if (!parse_number(s, d) || d != std::floor(d)) return false;
    out = static_cast<T>(d);
    return true;
  } else {
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
  }
}

}  // namespace

std::vector<MotRow> parse_mot_file(const fs::path& file, const MotImportOptions& opts) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open MOT file " + file.string());
  std::vector<MotRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_fields(line);
    auto fail = [&](const std::string& what) {
      throw ParseError(file.string() + ":" + std::to_string(lineno) + ": " + what);
    };
    if (fields.size() < 6) fail("expected at least 6 comma-separated fields");
    MotRow r;
    if (!parse_number(fields[0], r.frame)) fail("bad frame number");
    if (!parse_number(fields[1], r.id)) fail("bad target id");
    if (!parse_number(fields[2], r.left) || !parse_number(fields[3], r.top) || !parse_number(fields[4], r.width) ||
        !parse_number(fields[5], r.height)) {
      fail("bad bounding box");
    }
    if (fields.size() > 6 && !parse_number(fields[6], r.consider)) fail("bad consider flag");
    if (fields.size() > 7 && !parse_number(fields[7], r.cls)) fail("bad class");
    if (fields.size() > 8 && !parse_number(fields[8], r.visibility)) fail("bad visibility");
    if (fields.size() > 6 && opts.require_consider_flag && r.consider == 0) continue;
    if (fields.size() > 7 && std::find(opts.classes.begin(), opts.classes.end(), r.cls) == opts.classes.end()) {
      continue;
    }
    rows.push_back(r);
  }
  return rows;
}

void write_mot_file(const fs::path& file, const std::vector<MotRow>& rows) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error("cannot write MOT file " + file.string());
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.frame << ',' << r.id << ',' << r.left << ',' << r.top << ',' << r.width << ',' << r.height << ','
        << r.consider << ',' << r.cls << ',' << r.visibility << '\n';
  }
}

std::string mot_sequence_name(const fs::path& file) {
  const fs::path parent = file.parent_path();
  if (parent.filename() == "gt" && parent.has_parent_path() && !parent.parent_path().filename().empty()) {
    return parent.parent_path().filename().string();
  }
  return file.stem().string();
}

namespace {

struct Segment {
  std::string seq;
  int target;
  int index;
  std::vector<MotRow> rows;
};

SupervisedTrajectory to_trajectory(const Segment& seg) {
  const int n = static_cast<int>(seg.rows.size());
  SupervisedTrajectory tr;
  tr.id = seg.seq + ":" + std::to_string(seg.target) + ":" + std::to_string(seg.index);
  tr.observations.resize(n, 4);
  tr.states.resize(n, 6);
  for (int t = 0; t < n; ++t) {
    const auto& r = seg.rows[static_cast<size_t>(t)];
    tr.observations(t, 0) = r.left + 0.5 * r.width;
    tr.observations(t, 1) = r.top + 0.5 * r.height;
    tr.observations(t, 2) = r.width;
    tr.observations(t, 3) = r.height;
  }
  tr.states.leftCols(4) = tr.observations;
  tr.states.rightCols(2).setZero();
  for (int t = 1; t < n; ++t) {
    tr.states(t, 4) = tr.observations(t, 0) - tr.observations(t - 1, 0);
    tr.states(t, 5) = tr.observations(t, 1) - tr.observations(t - 1, 1);
  }
  if (n > 1) tr.states.row(0).tail(2) = tr.states.row(1).tail(2);
  return tr;
}

}  // namespace

Dataset import_mot_groundtruth(const std::vector<fs::path>& files, const MotImportOptions& opts) {
  std::vector<Segment> segments;
  std::map<std::string, fs::path> seen;
  for (const auto& file : files) {
    const std::string seq = mot_sequence_name(file);
    if (auto [it, fresh] = seen.emplace(seq, file); !fresh) {
      throw InvalidArgument("MOT import: sequence name '" + seq + "' used by both " + it->second.string() + " and " +
                            file.string());
    }
    std::map<int, std::vector<MotRow>> by_target;
    for (const auto& r : parse_mot_file(file, opts)) {
      auto& list = by_target[r.id];
      if (!list.empty() && r.frame <= list.back().frame) {
        throw ParseError(file.string() + ": target " + std::to_string(r.id) + ": frame " + std::to_string(r.frame) +
                         " does not increase after frame " + std::to_string(list.back().frame));
      }
      list.push_back(r);
    }
    for (auto& [target, rows] : by_target) {
      Segment cur{seq, target, 0, {}};
      for (const auto& r : rows) {
        if (!cur.rows.empty() && r.frame != cur.rows.back().frame + 1) {
          segments.push_back(cur);
          cur = Segment{seq, target, cur.index + 1, {}};
        }
        cur.rows.push_back(r);
      }
      if (!cur.rows.empty()) segments.push_back(std::move(cur));
    }
  }
  std::sort(segments.begin(), segments.end(), [](const Segment& a, const Segment& b) {
    return std::tie(a.seq, a.target, a.index) < std::tie(b.seq, b.target, b.index);
  });

  Dataset ds;
  ds.dim_x = 6;
  ds.dim_z = 4;
  std::vector<std::string> names;
  for (const auto& [seq, _] : seen) names.push_back(seq);
  ds.metadata = {{"source", "mot"}, {"family", "video"}, {"sequences", names}};
  ds.trajectories.reserve(segments.size());
  for (const auto& s : segments) ds.trajectories.push_back(to_trajectory(s));
  if (ds.trajectories.empty()) throw InsufficientData("MOT import: no rows survived filtering");
  return ds;
}

std::pair<Dataset, Dataset> import_mot_split(const MotSplit& split, const MotImportOptions& opts) {
  for (const auto& a : split.train) {
    for (const auto& b : split.test) {
      if (mot_sequence_name(a) == mot_sequence_name(b)) {
        throw InvalidArgument("MOT split: sequence '" + mot_sequence_name(a) + "' is in both train and test");
      }
    }
  }
  return {import_mot_groundtruth(split.train, opts), import_mot_groundtruth(split.test, opts)};
}

}  // namespace okf
