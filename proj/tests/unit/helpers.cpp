#include "helpers.hpp"

#include <sys/wait.h>

#include <array>
#include <atomic>
#include <cstdio>
#include <unistd.h>

namespace c3det::testutil {

std::filesystem::path temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto p = std::filesystem::temp_directory_path() /
                   ("c3det_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

LabeledImage random_scene(RandomSource& rng, int width, int height, int num_classes, int objects,
                          const std::string& id) {
    LabeledImage img;
    img.image_id = id;
    img.pixels = Image(width, height);
    for (float& v : img.pixels.data) v = static_cast<float>(rng.uniform());
    for (int i = 0; i < objects; ++i) {
        const double w = rng.uniform(3.0, 10.0), h = rng.uniform(3.0, 10.0);
        const double x = rng.uniform(0.0, width - w), y = rng.uniform(0.0, height - h);
        img.objects.push_back({{x, y, x + w, y + h}, static_cast<int>(rng.uniform_int(0, num_classes - 1))});
    }
    return img;
}

std::vector<UserInput> centre_clicks(const LabeledImage& img, int k) {
    std::vector<UserInput> u;
    for (int i = 0; i < k && i < img.num_objects(); ++i) {
        const auto& o = img.objects[static_cast<std::size_t>(i)];
        u.push_back({o.box.center_x(), o.box.center_y(), o.class_id, i});
    }
    return u;
}

int run_command(const std::string& cmd, std::string* out) {
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return -1;
    std::array<char, 4096> buf{};
    std::string text;
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) text.append(buf.data(), n);
    const int status = ::pclose(p);
    if (out) *out = text;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace c3det::testutil
