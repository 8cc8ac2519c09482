#include "a2f/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include <png.h>

namespace a2f {

ImagePlane ImagePlane::make_u8(int w, int h, int ch, ColorTag color) {
    if (w < 1 || h < 1 || (ch != 1 && ch != 3)) {
        throw ConfigError("image must be >=1x1 with 1 or 3 channels");
    }
    ImagePlane p;
    p.width = w;
    p.height = h;
    p.channels = ch;
    p.depth = Depth::U8;
    p.color = color;
    p.u8.assign(p.count(), 0);
    return p;
}

ImagePlane ImagePlane::make_f32(int w, int h, int ch, ColorTag color, FloatRange range) {
    if (w < 1 || h < 1 || (ch != 1 && ch != 3)) {
        throw ConfigError("image must be >=1x1 with 1 or 3 channels");
    }
    ImagePlane p;
    p.width = w;
    p.height = h;
    p.channels = ch;
    p.depth = Depth::F32;
    p.color = color;
    p.range = range;
    p.f32.assign(p.count(), 0.0f);
    return p;
}

namespace {

struct FileHandle {
    std::FILE* f = nullptr;
    explicit FileHandle(const std::filesystem::path& path, const char* mode)
        : f(std::fopen(path.string().c_str(), mode)) {}
    ~FileHandle() {
        if (f) std::fclose(f);
    }
    FileHandle(const FileHandle&) = delete;
    FileHandle& operator=(const FileHandle&) = delete;
};

}  // namespace

ImagePlane load_png(const std::filesystem::path& path) {
    FileHandle file(path, "rb");
    if (!file.f) throw StorageError("cannot open image " + path.string());

    unsigned char header[8];
    if (std::fread(header, 1, 8, file.f) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        throw StorageError("not a PNG file: " + path.string());
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw StorageError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw StorageError("libpng init failed");
    }
    std::vector<png_bytep> rows;
    ImagePlane out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw StorageError("corrupt PNG file: " + path.string());
    }
    png_init_io(png, file.f);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int bit_depth = png_get_bit_depth(png, info);
    if (bit_depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw StorageError("unsupported bit depth 16 in " + path.string() +
                           " (only 8-bit PNG is supported)");
    }
    const int color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = static_cast<int>(png_get_channels(png, info));
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw StorageError("unsupported channel count " + std::to_string(channels) + " in " +
                           path.string());
    }

    out = ImagePlane::make_u8(width, height, channels,
                              channels == 3 ? ColorTag::RGB : ColorTag::Y);
    rows.resize(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        rows[static_cast<std::size_t>(y)] = out.u8.data() + out.pixel_index(y, 0, 0);
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void save_png(const ImagePlane& plane, const std::filesystem::path& path) {
    const ImagePlane* src = &plane;
    ImagePlane quantized;
    if (plane.depth != Depth::U8) {
        quantized = quantize_u8(plane);
        src = &quantized;
    }

    FileHandle file(path, "wb");
    if (!file.f) throw StorageError("cannot open " + path.string() + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw StorageError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw StorageError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw StorageError("failed writing PNG " + path.string());
    }
    png_init_io(png, file.f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(src->width),
                 static_cast<png_uint_32>(src->height), 8,
                 src->channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < src->height; ++y) {
        png_write_row(png, const_cast<png_bytep>(src->u8.data() + src->pixel_index(y, 0, 0)));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

ImagePlane rgb_to_y(const ImagePlane& plane) {
    if (plane.channels != 3 || plane.color != ColorTag::RGB) {
        throw ConfigError("rgb_to_y expects an RGB plane");
    }
    const double scale =
        plane.depth == Depth::U8 || plane.range == FloatRange::Byte ? 1.0 / 255.0 : 1.0;
    ImagePlane y = ImagePlane::make_f32(plane.width, plane.height, 1, ColorTag::Y,
                                        FloatRange::Byte);
    for (int r = 0; r < plane.height; ++r) {
        for (int c = 0; c < plane.width; ++c) {
            const double red = plane.value(r, c, 0) * scale;
            const double green = plane.value(r, c, 1) * scale;
            const double blue = plane.value(r, c, 2) * scale;
            y.f32[y.pixel_index(r, c, 0)] =
                static_cast<float>(16.0 + 65.481 * red + 128.553 * green + 24.966 * blue);
        }
    }
    return y;
}

namespace {

// Keys cubic with a = -0.5.
double cubic_kernel(double x) {
    x = std::abs(x);
    if (x <= 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
    if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
    return 0.0;
}

struct TapSet {
    int first = 0;
    std::vector<double> weights;
};

TapSet taps_for(int i, int in_size, int out_size, bool antialias) {
    const double scale = static_cast<double>(out_size) / in_size;
    const double kscale = (antialias && scale < 1.0) ? scale : 1.0;
    const double center = (i + 0.5) / scale - 0.5;
    const double radius = 2.0 / kscale;
    const int first = static_cast<int>(std::floor(center - radius)) + 1;
    const int count = static_cast<int>(std::ceil(2.0 * radius)) + 1;

    TapSet t;
    t.first = first;
    t.weights.resize(static_cast<std::size_t>(count));
    double sum = 0.0;
    for (int k = 0; k < count; ++k) {
        const double w = kscale * cubic_kernel(kscale * (center - (first + k)));
        t.weights[static_cast<std::size_t>(k)] = w;
        sum += w;
    }
    if (sum != 0.0) {
        for (double& w : t.weights) w /= sum;
    }
    return t;
}

}  // namespace

std::pair<int, std::vector<double>> bicubic_taps(int out_index, int in_size, int out_size,
                                                 bool antialias) {
    TapSet t = taps_for(out_index, in_size, out_size, antialias);
    return {t.first, std::move(t.weights)};
}

ImagePlane bicubic_resize(const ImagePlane& plane, int out_w, int out_h, bool antialias) {
    if (out_w < 1 || out_h < 1) throw ConfigError("bicubic_resize: output size must be positive");

    std::vector<TapSet> col_taps(static_cast<std::size_t>(out_w));
    for (int x = 0; x < out_w; ++x) col_taps[static_cast<std::size_t>(x)] = taps_for(x, plane.width, out_w, antialias);
    std::vector<TapSet> row_taps(static_cast<std::size_t>(out_h));
    for (int y = 0; y < out_h; ++y) row_taps[static_cast<std::size_t>(y)] = taps_for(y, plane.height, out_h, antialias);

    const int ch = plane.channels;
    // Horizontal pass at the input height, then vertical.
    std::vector<double> mid(static_cast<std::size_t>(plane.height) * out_w * ch);
    for (int y = 0; y < plane.height; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const TapSet& t = col_taps[static_cast<std::size_t>(x)];
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (std::size_t k = 0; k < t.weights.size(); ++k) {
                    const int sx = std::clamp(t.first + static_cast<int>(k), 0, plane.width - 1);
                    acc += t.weights[k] * plane.value(y, sx, c);
                }
                mid[(static_cast<std::size_t>(y) * out_w + x) * ch + static_cast<std::size_t>(c)] = acc;
            }
        }
    }

    ImagePlane out = ImagePlane::make_f32(out_w, out_h, ch, plane.color,
                                          plane.depth == Depth::U8 ? FloatRange::Byte
                                                                   : plane.range);
    for (int y = 0; y < out_h; ++y) {
        const TapSet& t = row_taps[static_cast<std::size_t>(y)];
        for (int x = 0; x < out_w; ++x) {
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (std::size_t k = 0; k < t.weights.size(); ++k) {
                    const int sy = std::clamp(t.first + static_cast<int>(k), 0, plane.height - 1);
                    acc += t.weights[k] *
                           mid[(static_cast<std::size_t>(sy) * out_w + x) * ch + static_cast<std::size_t>(c)];
                }
                out.f32[out.pixel_index(y, x, c)] = static_cast<float>(acc);
            }
        }
    }
    return out;
}

ImagePlane quantize_u8(const ImagePlane& plane) {
    if (plane.depth == Depth::U8) return plane;
    ImagePlane out = ImagePlane::make_u8(plane.width, plane.height, plane.channels, plane.color);
    const double scale = plane.range == FloatRange::Unit ? 255.0 : 1.0;
    for (std::size_t i = 0; i < plane.f32.size(); ++i) {
        const double v = std::clamp(static_cast<double>(plane.f32[i]) * scale, 0.0, 255.0);
        out.u8[i] = static_cast<std::uint8_t>(std::lround(v));
    }
    return out;
}

Tensor image_to_tensor(const ImagePlane& plane) {
    Tensor t({1, plane.channels, plane.height, plane.width});
    const float scale =
        plane.depth == Depth::U8 || plane.range == FloatRange::Byte ? 1.0f / 255.0f : 1.0f;
    for (int c = 0; c < plane.channels; ++c) {
        for (int y = 0; y < plane.height; ++y) {
            for (int x = 0; x < plane.width; ++x) {
                t.at(0, c, y, x) = static_cast<float>(plane.value(y, x, c)) * scale;
            }
        }
    }
    return t;
}

ImagePlane tensor_to_image(const Tensor& t) {
    if (t.n() != 1 || (t.c() != 1 && t.c() != 3)) {
        throw ConfigError("tensor_to_image expects shape (1,1|3,h,w), got " + t.shape().str());
    }
    ImagePlane p = ImagePlane::make_f32(t.w(), t.h(), t.c(),
                                        t.c() == 3 ? ColorTag::RGB : ColorTag::Y,
                                        FloatRange::Unit);
    for (int c = 0; c < t.c(); ++c) {
        for (int y = 0; y < t.h(); ++y) {
            for (int x = 0; x < t.w(); ++x) {
                p.f32[p.pixel_index(y, x, c)] = t.at(0, c, y, x);
            }
        }
    }
    return p;
}

}  // namespace a2f
