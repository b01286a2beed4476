#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace c3det {

/// Error raised by any subsystem. `subsystem()` names the module that failed
/// so the CLI can report it.
class Error : public std::runtime_error {
public:
    Error(std::string subsystem, const std::string& what)
        : std::runtime_error(subsystem + ": " + what), subsystem_(std::move(subsystem)) {}

    const std::string& subsystem() const noexcept { return subsystem_; }

private:
    std::string subsystem_;
};

/// Ordered, unique class labels. Indices are 0-based.
class ClassCatalog {
public:
    ClassCatalog() = default;
    explicit ClassCatalog(std::vector<std::string> names);

    int size() const noexcept { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::string& name(int class_id) const { return names_.at(static_cast<std::size_t>(class_id)); }
    bool valid(int class_id) const noexcept { return class_id >= 0 && class_id < size(); }
    /// -1 when unknown.
    int find(const std::string& label) const noexcept;

    bool operator==(const ClassCatalog&) const = default;

private:
    std::vector<std::string> names_;
};

/// Axis-aligned box in pixel coordinates (origin top-left, y down).
struct Box {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    double width() const noexcept { return x_max - x_min; }
    double height() const noexcept { return y_max - y_min; }
    double area() const noexcept { return width() * height(); }
    double center_x() const noexcept { return 0.5 * (x_min + x_max); }
    double center_y() const noexcept { return 0.5 * (y_min + y_max); }
    bool valid() const noexcept { return x_min < x_max && y_min < y_max; }
    bool contains(double x, double y) const noexcept {
        return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
    }

    bool operator==(const Box&) const = default;
};

/// Throws when the box is degenerate.
Box make_box(double x_min, double y_min, double x_max, double y_max);

struct GroundTruthObject {
    Box box;
    int class_id = 0;

    bool operator==(const GroundTruthObject&) const = default;
};

/// Planar RGB image, values in [0,1]. Stored channel-major (3 x H x W).
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(3) * w * h, 0.0f) {}

    float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

struct LabeledImage {
    std::string image_id;
    Image pixels;
    std::vector<GroundTruthObject> objects;

    int num_objects() const noexcept { return static_cast<int>(objects.size()); }
};

/// A click hint. `gt_index` records which ground-truth object a simulated click
/// was drawn from; human clicks leave it empty.
struct UserInput {
    double x = 0;
    double y = 0;
    int class_id = 0;
    int gt_index = -1;

    bool has_gt() const noexcept { return gt_index >= 0; }
    bool operator==(const UserInput&) const = default;
};

struct Detection {
    Box box;
    int class_id = 0;
    double score = 0;

    bool operator==(const Detection&) const = default;
};

enum class Split { Train, Val, Test };

const char* split_name(Split s) noexcept;
/// Shortest round-trip text for a double (used by every CSV writer).
std::string format_real(double v);
Split parse_split(const std::string& s);

}  // namespace c3det
