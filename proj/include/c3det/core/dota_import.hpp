#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "c3det/core/dataset.hpp"

namespace c3det {

struct DotaImportOptions {
    /// Catalog to map class names onto. When empty, `out_root/meta.json` must exist.
    std::vector<std::string> classes;
    /// Directory holding `{stem}.png` for each label file; defaults to `text_dir/../images`.
    std::optional<fs::path> images_dir;
    Split split = Split::Train;
};

struct DotaLineError {
    std::string file;
    int line = 0;
    std::string reason;
};

struct DotaImportReport {
    int files = 0;
    int objects = 0;
    std::map<std::string, int> per_class;
    std::map<std::string, int> skipped_unknown_class;
    std::vector<DotaLineError> malformed;
    std::vector<std::string> missing_images;
};

/// Envelope of a DOTA 8-coordinate polygon.
Box polygon_envelope(const std::vector<double>& xy);

/// Parses the text of one DOTA label file. Header lines (`imagesource:`,
/// `gsd:`) are skipped; malformed lines land in `report.malformed`.
std::vector<GroundTruthObject> parse_dota_labels(const std::string& text, const std::string& file_name,
                                                 const ClassCatalog& classes, int width, int height,
                                                 DotaImportReport& report);

DotaImportReport import_dota(const fs::path& text_dir, const fs::path& out_root,
                             const DotaImportOptions& options = {});

}  // namespace c3det
