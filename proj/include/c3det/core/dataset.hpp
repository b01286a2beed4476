#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "c3det/core/types.hpp"

namespace c3det {

namespace fs = std::filesystem;

/// Contents of `root/meta.json`.
struct DatasetMeta {
    ClassCatalog classes;
    int width = 0;
    int height = 0;
};

DatasetMeta load_meta(const fs::path& root);
void save_meta(const fs::path& root, const DatasetMeta& meta);

/// Image ids present in `root/labels/{split}`, sorted.
std::vector<std::string> list_image_ids(const fs::path& root, Split split);

/// Loads every image of a split, sorted by image id. Validates class ids
/// against the catalog and boxes against the image bounds.
std::vector<LabeledImage> load_dataset(const fs::path& root, Split split);
LabeledImage load_image(const fs::path& root, Split split, const std::string& image_id,
                        const DatasetMeta& meta);

/// Writes PNGs and label files for a split (meta.json is written separately).
void save_dataset(const fs::path& root, Split split, const std::vector<LabeledImage>& images);
void save_labels(const fs::path& file, const std::vector<GroundTruthObject>& objects);

/// Canonical label-file text. Parsing and re-serializing a label file yields
/// the same bytes.
std::string labels_to_json(const std::vector<GroundTruthObject>& objects);
std::vector<GroundTruthObject> parse_labels(const std::string& text, const ClassCatalog& classes,
                                            int width, int height, const std::string& image_id);

Image read_png(const fs::path& file);
void write_png(const fs::path& file, const Image& image);
std::vector<unsigned char> encode_png(const Image& image);

/// Writes `content` to a sibling temp file then renames it over `file`.
void write_file_atomic(const fs::path& file, const std::string& content);
std::string read_file(const fs::path& file);

}  // namespace c3det
