#include "okf/data.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace okf {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "dataset payload is written in native order; big-endian hosts need byte swapping");

void Dataset::validate() const {
  if (trajectories.empty()) throw SchemaError("dataset: no trajectories");
  if (dim_x <= 0 || dim_z <= 0) throw SchemaError("dataset: dimensions must be positive");
  std::set<std::string> ids;
  for (size_t k = 0; k < trajectories.size(); ++k) {
    const auto& tr = trajectories[k];
    const std::string where = "dataset trajectory " + std::to_string(k) + " (" + tr.id + "): ";
    if (tr.states.cols() != dim_x || tr.observations.cols() != dim_z) {
      throw SchemaError(where + "dimension differs from dataset d_x/d_z");
    }
    if (tr.states.rows() != tr.observations.rows() || tr.states.rows() < 1) {
      throw SchemaError(where + "states and observations need equal, non-zero length");
    }
    if (!tr.states.allFinite() || !tr.observations.allFinite()) throw SchemaError(where + "non-finite entry");
    if (!ids.insert(tr.id).second) throw SchemaError(where + "duplicate id");
  }
}

bool operator==(const SupervisedTrajectory& a, const SupervisedTrajectory& b) {
  return a.id == b.id && a.states.rows() == b.states.rows() && a.states.cols() == b.states.cols() &&
         a.observations.rows() == b.observations.rows() && a.observations.cols() == b.observations.cols() &&
         a.states == b.states && a.observations == b.observations;
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.dim_x == b.dim_x && a.dim_z == b.dim_z && a.metadata == b.metadata &&
         a.trajectories == b.trajectories;
}

Dataset head(const Dataset& ds, size_t n) {
  if (n > ds.size()) throw InvalidArgument("head: requested more trajectories than available");
  Dataset out;
  out.dim_x = ds.dim_x;
  out.dim_z = ds.dim_z;
  out.metadata = ds.metadata;
  out.trajectories.assign(ds.trajectories.begin(), ds.trajectories.begin() + static_cast<long>(n));
  return out;
}

Dataset select(const Dataset& ds, const std::vector<size_t>& indices) {
  Dataset out;
  out.dim_x = ds.dim_x;
  out.dim_z = ds.dim_z;
  out.metadata = ds.metadata;
  out.trajectories.reserve(indices.size());
  for (size_t i : indices) out.trajectories.push_back(ds.trajectories.at(i));
  return out;
}

void write_dataset(const Dataset& ds, const fs::path& path) {
  ds.validate();
  json header;
  header["format"] = "OKFD1";
  header["d_x"] = ds.dim_x;
  header["d_z"] = ds.dim_z;
  header["metadata"] = ds.metadata;
  json entries = json::array();
  size_t payload_values = 0;
  for (const auto& tr : ds.trajectories) {
    entries.push_back({{"id", tr.id}, {"length", tr.length()}});
    payload_values += static_cast<size_t>(tr.length()) * static_cast<size_t>(ds.dim_x + ds.dim_z);
  }
  header["trajectories"] = std::move(entries);
  header["payload_bytes"] = payload_values * sizeof(double);
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("write_dataset: cannot open " + tmp.string());
    out.write(kDatasetMagic, sizeof(kDatasetMagic));
    const uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& tr : ds.trajectories) {
      out.write(reinterpret_cast<const char*>(tr.states.data()),
                static_cast<std::streamsize>(tr.states.size() * sizeof(double)));
      out.write(reinterpret_cast<const char*>(tr.observations.data()),
                static_cast<std::streamsize>(tr.observations.size() * sizeof(double)));
    }
    if (!out) throw Error("write_dataset: write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

Dataset read_dataset(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("read_dataset: cannot open " + path.string());
  char magic[sizeof(kDatasetMagic)];
  in.read(magic, sizeof(magic));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(magic)) ||
      std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0) {
    throw ParseError(path.string() + ": byte 0: not an OKFD1 dataset");
  }
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(len))) {
    throw ParseError(path.string() + ": byte 5: truncated header length");
  }
  const auto file_size = fs::file_size(path);
  if (len > file_size) throw ParseError(path.string() + ": byte 5: header length exceeds file size");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (static_cast<uint64_t>(in.gcount()) != len) throw ParseError(path.string() + ": byte 13: truncated header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": header: " + e.what());
  }
  Dataset ds;
  try {
    if (header.at("format").get<std::string>() != "OKFD1") throw SchemaError("unsupported format tag");
    ds.dim_x = header.at("d_x").get<int>();
    ds.dim_z = header.at("d_z").get<int>();
    ds.metadata = header.value("metadata", json::object());
    const auto& entries = header.at("trajectories");
    if (!entries.is_array()) throw SchemaError("trajectories must be an array");
    const uint64_t offset = sizeof(kDatasetMagic) + sizeof(uint64_t) + len;
    const uint64_t expected = header.at("payload_bytes").get<uint64_t>();
    if (file_size - offset != expected) {
      throw ParseError(path.string() + ": payload is " + std::to_string(file_size - offset) +
                       " bytes, header declares " + std::to_string(expected));
    }
    for (size_t k = 0; k < entries.size(); ++k) {
      const auto& e = entries[k];
      SupervisedTrajectory tr;
      tr.id = e.at("id").get<std::string>();
      const int n = e.at("length").get<int>();
      if (n < 1 || ds.dim_x < 1 || ds.dim_z < 1) throw SchemaError("record " + std::to_string(k) + ": bad shape");
      tr.states.resize(n, ds.dim_x);
      tr.observations.resize(n, ds.dim_z);
      in.read(reinterpret_cast<char*>(tr.states.data()),
              static_cast<std::streamsize>(tr.states.size() * sizeof(double)));
      in.read(reinterpret_cast<char*>(tr.observations.data()),
              static_cast<std::streamsize>(tr.observations.size() * sizeof(double)));
      if (!in) throw ParseError(path.string() + ": record " + std::to_string(k) + ": truncated payload");
      ds.trajectories.push_back(std::move(tr));
    }
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": header: " + e.what());
  }
  try {
    ds.validate();
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return ds;
}

void export_csv(const Dataset& ds, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("export_csv: cannot open " + path.string());
  out << "trajectory,t";
  for (int i = 0; i < ds.dim_x; ++i) out << ",x" << i;
  for (int i = 0; i < ds.dim_z; ++i) out << ",z" << i;
  out << '\n' << std::setprecision(17);
  for (const auto& tr : ds.trajectories) {
    for (int t = 0; t < tr.length(); ++t) {
      out << tr.id << ',' << t;
      for (int i = 0; i < ds.dim_x; ++i) out << ',' << tr.states(t, i);
      for (int i = 0; i < ds.dim_z; ++i) out << ',' << tr.observations(t, i);
      out << '\n';
    }
  }
}

}  // namespace okf
