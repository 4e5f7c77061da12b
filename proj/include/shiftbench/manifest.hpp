#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace shiftbench {

enum class SplitTag { Train, Val, Test, Unassigned };

std::string_view to_string(SplitTag tag);
SplitTag parse_split_tag(std::string_view s);

struct SampleRecord {
  std::string sample_id;
  std::string image_path;  // relative to the manifest root
  int label = 0;
  std::string subclass;
  std::map<std::string, bool> artifact_flags;
  std::optional<std::string> injected_color;
  SplitTag split_tag = SplitTag::Unassigned;

  bool operator==(const SampleRecord&) const = default;
};

struct Provenance {
  std::string description;
  std::uint64_t seed = 0;

  bool operator==(const Provenance&) const = default;
};

struct DatasetManifest {
  std::vector<SampleRecord> records;
  std::array<std::string, 2> class_names{"class_0", "class_1"};
  std::vector<std::string> artifact_names;
  Provenance provenance;
  // Directory that image paths are relative to. Not serialized.
  std::filesystem::path root;

  // Sorts by sample_id, fills absent artifact flags with false and checks
  // every invariant. Throws DataError.
  void normalize();

  std::array<std::size_t, 2> class_counts() const;
  std::filesystem::path image_file(const SampleRecord& r) const { return root / r.image_path; }

  // Copy of the metadata with only the records accepted by `keep`.
  DatasetManifest filter(const std::function<bool(const SampleRecord&)>& keep) const;
  DatasetManifest with_records(std::vector<SampleRecord> recs) const;

  // Same records with image paths rewritten relative to new_root.
  DatasetManifest rebased(const std::filesystem::path& new_root) const;

  // Field-for-field equality; `root` is ignored.
  bool operator==(const DatasetManifest& o) const {
    return records == o.records && class_names == o.class_names &&
           artifact_names == o.artifact_names && provenance == o.provenance;
  }
};

// CSV columns: sample_id, image_path, label, subclass, split_tag,
// injected_color, then one 0/1 column per artifact. Class names and
// provenance live in a sidecar "<path>.json".
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

std::string manifest_to_csv(const DatasetManifest& manifest);

}  // namespace shiftbench
