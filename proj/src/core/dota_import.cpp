#include "c3det/core/dota_import.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace c3det {

Box polygon_envelope(const std::vector<double>& xy) {
    if (xy.size() != 8) throw Error("core", "polygon needs 8 coordinates");
    Box b{xy[0], xy[1], xy[0], xy[1]};
    for (std::size_t i = 0; i < 8; i += 2) {
        b.x_min = std::min(b.x_min, xy[i]);
        b.x_max = std::max(b.x_max, xy[i]);
        b.y_min = std::min(b.y_min, xy[i + 1]);
        b.y_max = std::max(b.y_max, xy[i + 1]);
    }
    return b;
}

namespace {

bool parse_double(const std::string& tok, double& out) {
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

}  // namespace

std::vector<GroundTruthObject> parse_dota_labels(const std::string& text, const std::string& file_name,
                                                 const ClassCatalog& classes, int width, int height,
                                                 DotaImportReport& report) {
    std::vector<GroundTruthObject> out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (line.rfind("imagesource:", 0) == 0 || line.rfind("gsd:", 0) == 0) continue;

        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.size() != 9 && tok.size() != 10) {
            report.malformed.push_back({file_name, line_no, "expected 9 or 10 tokens, got " + std::to_string(tok.size())});
            continue;
        }
        std::vector<double> xy(8);
        bool ok = true;
        for (int i = 0; i < 8; ++i) ok = ok && parse_double(tok[static_cast<std::size_t>(i)], xy[static_cast<std::size_t>(i)]);
        if (!ok) {
            report.malformed.push_back({file_name, line_no, "non-numeric coordinate"});
            continue;
        }
        const std::string& label = tok[8];
        const int cls = classes.find(label);
        if (cls < 0) {
            ++report.skipped_unknown_class[label];
            continue;
        }
        Box b = polygon_envelope(xy);
        b.x_min = std::clamp(b.x_min, 0.0, static_cast<double>(width));
        b.x_max = std::clamp(b.x_max, 0.0, static_cast<double>(width));
        b.y_min = std::clamp(b.y_min, 0.0, static_cast<double>(height));
        b.y_max = std::clamp(b.y_max, 0.0, static_cast<double>(height));
        if (!b.valid()) {
            report.malformed.push_back({file_name, line_no, "degenerate box after clipping to image"});
            continue;
        }
        out.push_back({b, cls});
        ++report.objects;
        ++report.per_class[label];
    }
    return out;
}

DotaImportReport import_dota(const fs::path& text_dir, const fs::path& out_root, const DotaImportOptions& options) {
    if (!fs::is_directory(text_dir)) throw Error("core", "DOTA label directory not found: " + text_dir.string());
    DatasetMeta meta;
    const bool have_meta = fs::exists(out_root / "meta.json");
    if (!options.classes.empty()) {
        meta.classes = ClassCatalog(options.classes);
        if (have_meta && load_meta(out_root).classes != meta.classes)
            throw Error("core", "class list disagrees with existing " + (out_root / "meta.json").string());
    } else if (have_meta) {
        meta = load_meta(out_root);
    } else {
        throw Error("core", "no class list given and no meta.json in " + out_root.string());
    }
    const fs::path images_dir = options.images_dir.value_or(text_dir.parent_path() / "images");

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(text_dir))
        if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());

    DotaImportReport report;
    std::vector<LabeledImage> images;
    for (const auto& f : files) {
        const std::string stem = f.stem().string();
        const fs::path png = images_dir / (stem + ".png");
        if (!fs::exists(png)) {
            report.missing_images.push_back(stem);
            continue;
        }
        LabeledImage li;
        li.image_id = stem;
        li.pixels = read_png(png);
        li.objects = parse_dota_labels(read_file(f), f.filename().string(), meta.classes, li.pixels.width,
                                       li.pixels.height, report);
        meta.width = std::max(meta.width, li.pixels.width);
        meta.height = std::max(meta.height, li.pixels.height);
        ++report.files;
        images.push_back(std::move(li));
    }
    save_dataset(out_root, options.split, images);
    if (!have_meta || !options.classes.empty()) save_meta(out_root, meta);
    return report;
}

}  // namespace c3det
