#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "a2f/image.hpp"

namespace a2f {

struct DatasetPair {
    std::string stem;
    std::filesystem::path hr;
    std::filesystem::path lr;
};

struct Manifest {
    int scale = 0;
    std::filesystem::path file;
    std::vector<DatasetPair> pairs;
    std::vector<std::string> warnings;
};

// Center-crops every HR PNG under hr_dir to dimensions divisible by scale,
// writes the crops under out_root/HR and the antialiased bicubic 1/scale
// downsamples under out_root/X{scale}, and records the pairs (one
// "hr_path,lr_path" line each) in out_root/manifest_X{scale}.csv. Unreadable
// images are skipped with a warning; an empty input directory is an error.
Manifest prepare_dataset(const std::filesystem::path& hr_dir, int scale,
                         const std::filesystem::path& out_root);

// Reads a prepared dataset back. Uses the manifest when present, otherwise
// pairs HR/ and X{scale}/ files by stem; orphan stems on either side are an
// error listing the offenders.
Manifest load_dataset(const std::filesystem::path& root, int scale);

struct LoadedPair {
    std::string name;
    ImagePlane hr;
    ImagePlane lr;
};

std::vector<LoadedPair> load_pairs(const Manifest& manifest);

}  // namespace a2f
