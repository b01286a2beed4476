#include "c3det/core/types.hpp"

#include <charconv>
#include <set>

namespace c3det {

ClassCatalog::ClassCatalog(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty()) throw Error("core", "class catalog must not be empty");
    std::set<std::string> seen;
    for (const auto& n : names_) {
        if (!seen.insert(n).second) throw Error("core", "duplicate class label '" + n + "'");
    }
}

int ClassCatalog::find(const std::string& label) const noexcept {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == label) return static_cast<int>(i);
    }
    return -1;
}

Box make_box(double x_min, double y_min, double x_max, double y_max) {
    Box b{x_min, y_min, x_max, y_max};
    if (!b.valid()) throw Error("core", "degenerate box");
    return b;
}

const char* split_name(Split s) noexcept {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

std::string format_real(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw Error("core", "unknown split '" + s + "'");
}

}  // namespace c3det
