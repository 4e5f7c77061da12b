#include "shiftbench/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "shiftbench/csv.hpp"
#include "shiftbench/errors.hpp"

namespace shiftbench {

namespace {

const std::array<std::string, 6> kFixedColumns = {"sample_id", "image_path", "label",
                                                  "subclass",  "split_tag",  "injected_color"};

std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  auto s = p;
  s += ".json";
  return s;
}

}  // namespace

std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::Train: return "train";
    case SplitTag::Val: return "val";
    case SplitTag::Test: return "test";
    case SplitTag::Unassigned: return "unassigned";
  }
  return "unassigned";
}

SplitTag parse_split_tag(std::string_view s) {
  if (s == "train") return SplitTag::Train;
  if (s == "val") return SplitTag::Val;
  if (s == "test") return SplitTag::Test;
  if (s == "unassigned" || s.empty()) return SplitTag::Unassigned;
  throw DataError("unknown split_tag '" + std::string(s) + "'");
}

void DatasetManifest::normalize() {
  std::sort(records.begin(), records.end(),
            [](const SampleRecord& a, const SampleRecord& b) { return a.sample_id < b.sample_id; });
  const std::set<std::string> names(artifact_names.begin(), artifact_names.end());
  if (names.size() != artifact_names.size()) throw DataError("duplicate artifact name");
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    if (i > 0 && records[i - 1].sample_id == r.sample_id)
      throw DataError("duplicate sample_id '" + r.sample_id + "'");
    if (r.label != 0 && r.label != 1)
      throw DataError("label out of range for '" + r.sample_id + "'");
    for (const auto& [name, flag] : r.artifact_flags)
      if (!names.count(name))
        throw DataError("artifact '" + name + "' of '" + r.sample_id + "' not declared");
    for (const auto& name : artifact_names) r.artifact_flags.try_emplace(name, false);
  }
}

std::array<std::size_t, 2> DatasetManifest::class_counts() const {
  std::array<std::size_t, 2> counts{0, 0};
  for (const auto& r : records) ++counts[static_cast<std::size_t>(r.label)];
  return counts;
}

DatasetManifest DatasetManifest::filter(const std::function<bool(const SampleRecord&)>& keep) const {
  DatasetManifest out = with_records({});
  for (const auto& r : records)
    if (keep(r)) out.records.push_back(r);
  return out;
}

DatasetManifest DatasetManifest::with_records(std::vector<SampleRecord> recs) const {
  DatasetManifest out;
  out.records = std::move(recs);
  out.class_names = class_names;
  out.artifact_names = artifact_names;
  out.provenance = provenance;
  out.root = root;
  return out;
}

DatasetManifest DatasetManifest::rebased(const std::filesystem::path& new_root) const {
  DatasetManifest out = *this;
  const auto from = std::filesystem::absolute(root).lexically_normal();
  const auto to = std::filesystem::absolute(new_root).lexically_normal();
  for (auto& r : out.records)
    r.image_path = (from / r.image_path).lexically_normal().lexically_relative(to).generic_string();
  out.root = new_root;
  return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("manifest not found: " + path.string());
  const auto rows = csv::read_file(path);
  if (rows.empty()) throw DataError(path.string() + ": missing header row");

  const auto& header = rows.front();
  if (header.size() < kFixedColumns.size() ||
      !std::equal(kFixedColumns.begin(), kFixedColumns.end(), header.begin()))
    throw DataError(path.string() + ": unexpected header");

  DatasetManifest m;
  m.root = path.parent_path();
  m.artifact_names.assign(header.begin() + kFixedColumns.size(), header.end());

  std::set<std::string> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::string where = path.string() + ": row " + std::to_string(i + 1);
    if (row.size() != header.size())
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(row.size()));
    SampleRecord r;
    r.sample_id = row[0];
    if (r.sample_id.empty()) throw DataError(where + ": empty sample_id");
    if (!seen.insert(r.sample_id).second)
      throw DataError("duplicate sample_id at row " + std::to_string(i + 1) + " ('" + r.sample_id + "')");
    r.image_path = row[1];
    long long label = 0;
    try {
      label = csv::parse_int(row[2]);
    } catch (const DataError&) {
      throw DataError(where + ": malformed label '" + row[2] + "'");
    }
    if (label != 0 && label != 1) throw DataError(where + ": label out of range (" + row[2] + ")");
    r.label = static_cast<int>(label);
    r.subclass = row[3];
    try {
      r.split_tag = parse_split_tag(row[4]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    if (!row[5].empty() && row[5] != "none") r.injected_color = row[5];
    for (std::size_t a = 0; a < m.artifact_names.size(); ++a) {
      const auto& v = row[kFixedColumns.size() + a];
      if (v != "0" && v != "1") throw DataError(where + ": artifact flag must be 0 or 1");
      r.artifact_flags[m.artifact_names[a]] = v == "1";
    }
    m.records.push_back(std::move(r));
  }

  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    std::ifstream in(side);
    try {
      const auto j = nlohmann::json::parse(in);
      m.class_names = j.at("class_names").get<std::array<std::string, 2>>();
      m.provenance.description = j.at("provenance").at("description").get<std::string>();
      m.provenance.seed = j.at("provenance").at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(side.string() + ": " + e.what());
    }
  }
  m.normalize();
  return m;
}

std::string manifest_to_csv(const DatasetManifest& manifest) {
  std::string out;
  csv::Row header(kFixedColumns.begin(), kFixedColumns.end());
  header.insert(header.end(), manifest.artifact_names.begin(), manifest.artifact_names.end());
  out += csv::join(header);
  out += '\n';
  for (const auto& r : manifest.records) {
    csv::Row row{r.sample_id,
                 r.image_path,
                 std::to_string(r.label),
                 r.subclass,
                 std::string(to_string(r.split_tag)),
                 r.injected_color.value_or("none")};
    for (const auto& name : manifest.artifact_names) {
      auto it = r.artifact_flags.find(name);
      row.push_back(it != r.artifact_flags.end() && it->second ? "1" : "0");
    }
    out += csv::join(row);
    out += '\n';
  }
  return out;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  DatasetManifest sorted = manifest;
  sorted.normalize();
  csv::write_atomic(path, manifest_to_csv(sorted));
  nlohmann::ordered_json j;
  j["class_names"] = sorted.class_names;
  j["provenance"] = {{"description", sorted.provenance.description},
                     {"seed", sorted.provenance.seed}};
  csv::write_atomic(sidecar_path(path), j.dump(2) + "\n");
}

}  // namespace shiftbench
