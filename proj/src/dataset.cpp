#include "a2f/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

namespace a2f {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> png_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw StorageError("not a directory: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

ImagePlane center_crop_multiple(const ImagePlane& img, int scale) {
    const int w = img.width - img.width % scale;
    const int h = img.height - img.height % scale;
    if (w == img.width && h == img.height) return img;
    const int x0 = (img.width - w) / 2;
    const int y0 = (img.height - h) / 2;
    ImagePlane out = ImagePlane::make_u8(w, h, img.channels, img.color);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                out.u8[out.pixel_index(y, x, c)] = img.u8[img.pixel_index(y + y0, x + x0, c)];
            }
        }
    }
    return out;
}

std::string lr_dirname(int scale) { return "X" + std::to_string(scale); }

std::string manifest_name(int scale) { return "manifest_X" + std::to_string(scale) + ".csv"; }

}  // namespace

Manifest prepare_dataset(const fs::path& hr_dir, int scale, const fs::path& out_root) {
    if (scale < 2 || scale > 4) {
        throw ConfigError("scale must be 2, 3 or 4, got " + std::to_string(scale));
    }
    const std::vector<fs::path> files = png_files(hr_dir);
    if (files.empty()) {
        throw StorageError("no PNG images found in " + hr_dir.string());
    }

    const fs::path hr_out = out_root / "HR";
    const fs::path lr_out = out_root / lr_dirname(scale);
    fs::create_directories(hr_out);
    fs::create_directories(lr_out);

    Manifest manifest;
    manifest.scale = scale;
    manifest.file = out_root / manifest_name(scale);

    for (const fs::path& src : files) {
        ImagePlane img;
        try {
            img = load_png(src);
        } catch (const Error& e) {
            manifest.warnings.push_back("skipped " + src.string() + ": " + e.what());
            continue;
        }
        if (img.channels != 3) {
            manifest.warnings.push_back("skipped " + src.string() + ": not an RGB image");
            continue;
        }
        const ImagePlane hr = center_crop_multiple(img, scale);
        if (hr.width < scale || hr.height < scale) {
            manifest.warnings.push_back("skipped " + src.string() + ": too small");
            continue;
        }
        const ImagePlane lr =
            quantize_u8(bicubic_resize(hr, hr.width / scale, hr.height / scale, true));

        const std::string stem = src.stem().string();
        const fs::path hr_path = hr_out / (stem + ".png");
        const fs::path lr_path = lr_out / (stem + ".png");
        save_png(hr, hr_path);
        save_png(lr, lr_path);
        manifest.pairs.push_back({stem, hr_path, lr_path});
    }
    if (manifest.pairs.empty()) {
        throw StorageError("no usable images in " + hr_dir.string());
    }

    std::ofstream out(manifest.file);
    if (!out) throw StorageError("cannot write manifest " + manifest.file.string());
    for (const std::string& w : manifest.warnings) out << "# " << w << "\n";
    for (const auto& p : manifest.pairs) {
        out << p.hr.string() << "," << p.lr.string() << "\n";
    }
    return manifest;
}

Manifest load_dataset(const fs::path& root, int scale) {
    Manifest manifest;
    manifest.scale = scale;
    manifest.file = root / manifest_name(scale);

    if (fs::is_regular_file(manifest.file)) {
        std::ifstream in(manifest.file);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (line[0] == '#') {
                manifest.warnings.push_back(line.substr(1));
                continue;
            }
            const std::size_t comma = line.find(',');
            if (comma == std::string::npos) {
                throw StorageError("malformed manifest line in " + manifest.file.string() +
                                   ": " + line);
            }
            DatasetPair pair;
            pair.hr = line.substr(0, comma);
            pair.lr = line.substr(comma + 1);
            pair.stem = pair.hr.stem().string();
            manifest.pairs.push_back(std::move(pair));
        }
        if (manifest.pairs.empty()) {
            throw StorageError("manifest " + manifest.file.string() + " lists no pairs");
        }
        return manifest;
    }

    // No manifest: pair by stem.
    const fs::path hr_dir = root / "HR";
    const fs::path lr_dir = root / lr_dirname(scale);
    std::map<std::string, fs::path> hr_by_stem, lr_by_stem;
    for (const fs::path& p : png_files(hr_dir)) hr_by_stem[p.stem().string()] = p;
    for (const fs::path& p : png_files(lr_dir)) lr_by_stem[p.stem().string()] = p;

    std::vector<std::string> orphans;
    for (const auto& [stem, path] : hr_by_stem) {
        if (!lr_by_stem.count(stem)) orphans.push_back("HR-only: " + stem);
    }
    for (const auto& [stem, path] : lr_by_stem) {
        if (!hr_by_stem.count(stem)) orphans.push_back("LR-only: " + stem);
    }
    if (!orphans.empty()) {
        std::string msg = "unpaired images under " + root.string() + ":";
        for (const std::string& o : orphans) msg += " " + o;
        throw EvalError(msg);
    }
    for (const auto& [stem, path] : hr_by_stem) {
        manifest.pairs.push_back({stem, path, lr_by_stem.at(stem)});
    }
    if (manifest.pairs.empty()) {
        throw StorageError("no image pairs under " + root.string());
    }
    return manifest;
}

std::vector<LoadedPair> load_pairs(const Manifest& manifest) {
    std::vector<LoadedPair> pairs;
    pairs.reserve(manifest.pairs.size());
    for (const auto& p : manifest.pairs) {
        pairs.push_back({p.stem, load_png(p.hr), load_png(p.lr)});
    }
    return pairs;
}

}  // namespace a2f
