#pragma once

#include "dexp/core/error.hpp"
#include "dexp/core/tensor.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace dexp {

/// Reads an 8-bit PNG as a [C,H,W] image in [0,1]; C is 1 for gray input and 3 otherwise. Alpha is dropped.
inline Tensor read_png(const std::string& path)
{
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw IoError("cannot read PNG " + path + ": " + image.message);
    const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    const std::size_t channels = gray ? 1 : 3;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr))
    {
        png_image_free(&image);
        throw IoError("cannot decode PNG " + path + ": " + image.message);
    }
    const std::size_t width = image.width, height = image.height;
    Tensor out({channels, height, width});
    for (std::size_t j = 0; j < height; ++j)
        for (std::size_t i = 0; i < width; ++i)
            for (std::size_t ch = 0; ch < channels; ++ch)
                out(ch, j, i) = buffer[(j * width + i) * channels + ch] / 255.0;
    return out;
}

/// Quantizes a [C,H,W] image (C = 1 or 3) to 8 bits after clamping to [0,1].
inline std::vector<std::uint8_t> quantize_image(const Tensor& img)
{
    const std::size_t channels = img.extent(0), height = img.extent(1), width = img.extent(2);
    std::vector<std::uint8_t> buffer(channels * height * width);
    for (std::size_t j = 0; j < height; ++j)
        for (std::size_t i = 0; i < width; ++i)
            for (std::size_t ch = 0; ch < channels; ++ch)
            {
                const double v = std::isfinite(img(ch, j, i)) ? std::clamp(img(ch, j, i), 0.0, 1.0) : 0.0;
                buffer[(j * width + i) * channels + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
    return buffer;
}

inline void write_png(const std::string& path, const Tensor& img)
{
    if (img.rank() != 3 || (img.extent(0) != 1 && img.extent(0) != 3))
        throw ShapeError("write_png: expected a [1,H,W] or [3,H,W] image, got " + to_string(img.shape()));
    const auto buffer = quantize_image(img);
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.extent(2));
    image.height = static_cast<png_uint_32>(img.extent(1));
    image.format = img.extent(0) == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr))
        throw IoError("cannot write PNG " + path + ": " + image.message);
}

} // namespace dexp
