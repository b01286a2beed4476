#include "c3det/core/dataset.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

namespace c3det {

using nlohmann::json;

namespace {

Error data_error(const std::string& what) { return Error("core", what); }

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

unsigned char to_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<unsigned char>(std::lround(c * 255.0f));
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + len);
}

void png_flush_noop(png_structp) {}

}  // namespace

std::string read_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw data_error("cannot open " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& file, const std::string& content) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    fs::path tmp = file;
    tmp += ".tmp";
    {
        FilePtr f(std::fopen(tmp.c_str(), "wb"));
        if (!f) throw data_error("cannot write " + tmp.string());
        if (std::fwrite(content.data(), 1, content.size(), f.get()) != content.size())
            throw data_error("short write to " + tmp.string());
        std::fflush(f.get());
    }
    fs::rename(tmp, file);
}

DatasetMeta load_meta(const fs::path& root) {
    const fs::path file = root / "meta.json";
    if (!fs::exists(file)) throw data_error("missing meta file " + file.string());
    json j;
    try {
        j = json::parse(read_file(file));
    } catch (const json::exception& e) {
        throw data_error("malformed meta file " + file.string() + ": " + e.what());
    }
    DatasetMeta meta;
    meta.classes = ClassCatalog(j.at("classes").get<std::vector<std::string>>());
    const auto size = j.at("image_size").get<std::vector<int>>();
    if (size.size() != 2 || size[0] <= 0 || size[1] <= 0)
        throw data_error("meta image_size must be [W,H]");
    meta.width = size[0];
    meta.height = size[1];
    return meta;
}

void save_meta(const fs::path& root, const DatasetMeta& meta) {
    json j;
    j["classes"] = meta.classes.names();
    j["image_size"] = {meta.width, meta.height};
    write_file_atomic(root / "meta.json", j.dump(2) + "\n");
}

std::vector<std::string> list_image_ids(const fs::path& root, Split split) {
    const fs::path dir = root / "labels" / split_name(split);
    std::vector<std::string> ids;
    if (!fs::exists(dir)) return ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::string labels_to_json(const std::vector<GroundTruthObject>& objects) {
    json arr = json::array();
    for (const auto& o : objects) {
        arr.push_back({{"class_id", o.class_id},
                       {"bbox", {o.box.x_min, o.box.y_min, o.box.x_max, o.box.y_max}}});
    }
    json j;
    j["objects"] = std::move(arr);
    return j.dump(2) + "\n";
}

std::vector<GroundTruthObject> parse_labels(const std::string& text, const ClassCatalog& classes,
                                            int width, int height, const std::string& image_id) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw data_error("image '" + image_id + "': malformed label file: " + e.what());
    }
    std::vector<GroundTruthObject> out;
    for (const auto& o : j.at("objects")) {
        GroundTruthObject g;
        g.class_id = o.at("class_id").get<int>();
        if (!classes.valid(g.class_id))
            throw data_error("image '" + image_id + "': unknown class id " + std::to_string(g.class_id));
        const auto b = o.at("bbox").get<std::vector<double>>();
        if (b.size() != 4) throw data_error("image '" + image_id + "': bbox needs 4 values");
        g.box = Box{b[0], b[1], b[2], b[3]};
        if (!g.box.valid()) throw data_error("image '" + image_id + "': degenerate box");
        if (g.box.x_min < 0 || g.box.y_min < 0 || g.box.x_max > width || g.box.y_max > height)
            throw data_error("image '" + image_id + "': box outside image");
        out.push_back(g);
    }
    return out;
}

LabeledImage load_image(const fs::path& root, Split split, const std::string& image_id,
                        const DatasetMeta& meta) {
    LabeledImage li;
    li.image_id = image_id;
    const fs::path png = root / "images" / split_name(split) / (image_id + ".png");
    li.pixels = read_png(png);
    const fs::path lbl = root / "labels" / split_name(split) / (image_id + ".json");
    try {
        li.objects = parse_labels(read_file(lbl), meta.classes, li.pixels.width, li.pixels.height, image_id);
    } catch (const json::exception& e) {
        throw data_error("image '" + image_id + "' (" + lbl.string() + "): " + e.what());
    } catch (const Error& e) {
        throw data_error(std::string(e.what()) + " [" + lbl.string() + "]");
    }
    return li;
}

std::vector<LabeledImage> load_dataset(const fs::path& root, Split split) {
    const DatasetMeta meta = load_meta(root);
    std::vector<LabeledImage> out;
    for (const auto& id : list_image_ids(root, split)) out.push_back(load_image(root, split, id, meta));
    return out;
}

void save_labels(const fs::path& file, const std::vector<GroundTruthObject>& objects) {
    write_file_atomic(file, labels_to_json(objects));
}

void save_dataset(const fs::path& root, Split split, const std::vector<LabeledImage>& images) {
    const fs::path img_dir = root / "images" / split_name(split);
    const fs::path lbl_dir = root / "labels" / split_name(split);
    fs::create_directories(img_dir);
    fs::create_directories(lbl_dir);
    for (const auto& li : images) {
        write_png(img_dir / (li.image_id + ".png"), li.pixels);
        save_labels(lbl_dir / (li.image_id + ".json"), li.objects);
    }
}

std::vector<unsigned char> encode_png(const Image& image) {
    std::vector<unsigned char> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw data_error("png: cannot allocate writer");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw data_error("png: encode failed");
    }
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 3);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(x) * 3 + c] = to_byte(image.at(c, y, x));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

void write_png(const fs::path& file, const Image& image) {
    const auto bytes = encode_png(image);
    write_file_atomic(file, std::string(bytes.begin(), bytes.end()));
}

Image read_png(const fs::path& file) {
    FilePtr f(std::fopen(file.c_str(), "rb"));
    if (!f) throw data_error("cannot open image " + file.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw data_error("png: cannot allocate reader");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw data_error("png: decode failed for " + file.string());
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    Image img(w, h);
    std::vector<unsigned char> row(png_get_rowbytes(png, info));
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

}  // namespace c3det
