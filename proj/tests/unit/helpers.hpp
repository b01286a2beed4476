#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "c3det/core/random.hpp"
#include "c3det/core/types.hpp"

namespace c3det::testutil {

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

/// Random image with `objects` non-degenerate boxes of random classes.
LabeledImage random_scene(RandomSource& rng, int width, int height, int num_classes, int objects,
                          const std::string& id = "img");

/// One click per object at its box centre, for the first `k` objects.
std::vector<UserInput> centre_clicks(const LabeledImage& img, int k);

/// Runs a shell command; returns its exit status and captured stdout.
int run_command(const std::string& cmd, std::string* out = nullptr);

}  // namespace c3det::testutil
