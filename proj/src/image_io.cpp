#include "sdabn/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "sdabn/errors.hpp"

namespace sdabn {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
    throw IoError(path.string() + ": " + what);
}

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

/// Decodes an 8-bit PNG into interleaved rows with the requested channel
/// count (3 = RGB, 1 = gray).
std::vector<std::uint8_t> read_png(const std::filesystem::path& path, int want_channels,
                                   std::int64_t& height, std::int64_t& width) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) fail(path, "cannot open for reading");

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        fail(path, "not a PNG file");
    }

    PngReader r;
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) fail(path, "png_create_read_struct failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) fail(path, "png_create_info_struct failed");
    if (setjmp(png_jmpbuf(r.png))) fail(path, "malformed PNG data");

    png_init_io(r.png, fp.get());
    png_set_sig_bytes(r.png, 8);
    png_read_info(r.png, r.info);

    const png_uint_32 w = png_get_image_width(r.png, r.info);
    const png_uint_32 h = png_get_image_height(r.png, r.info);
    const png_byte color = png_get_color_type(r.png, r.info);
    const png_byte depth = png_get_bit_depth(r.png, r.info);

    if (depth == 16) png_set_strip_16(r.png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
    if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
    png_set_strip_alpha(r.png);
    if (want_channels == 3) {
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
            png_set_gray_to_rgb(r.png);
        }
    } else {
        if (color != PNG_COLOR_TYPE_GRAY) fail(path, "expected an 8-bit grayscale PNG");
    }
    png_read_update_info(r.png, r.info);

    const std::size_t rowbytes = png_get_rowbytes(r.png, r.info);
    if (rowbytes != static_cast<std::size_t>(w) * static_cast<std::size_t>(want_channels)) {
        fail(path, "unexpected decoded channel layout");
    }
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(h) * rowbytes);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + y * rowbytes;
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);

    height = static_cast<std::int64_t>(h);
    width = static_cast<std::int64_t>(w);
    return pixels;
}

void write_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
               std::int64_t height, std::int64_t width, int channels) {
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) fail(path, "cannot open for writing");

    PngWriter wr;
    wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!wr.png) fail(path, "png_create_write_struct failed");
    wr.info = png_create_info_struct(wr.png);
    if (!wr.info) fail(path, "png_create_info_struct failed");
    if (setjmp(png_jmpbuf(wr.png))) fail(path, "PNG encode failed");

    png_init_io(wr.png, fp.get());
    png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(wr.png, 6);
    png_write_info(wr.png, wr.info);

    const std::size_t rowbytes = static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (std::int64_t y = 0; y < height; ++y) {
        rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(pixels.data() + y * rowbytes);
    }
    png_write_image(wr.png, rows.data());
    png_write_end(wr.png, nullptr);
}

}  // namespace

std::uint8_t quantize_unit_to_byte(double v) {
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

Image load_image(const std::filesystem::path& path) {
    std::int64_t h = 0, w = 0;
    const std::vector<std::uint8_t> pixels = read_png(path, 3, h, w);
    Image img(h, w, 3);
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const std::uint8_t* p = pixels.data() + (y * w + x) * 3;
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<double>(p[c]) / 255.0;
        }
    }
    return img;
}

void save_image(const Image& img, const std::filesystem::path& path) {
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(img.height * img.width * 3));
    for (std::int64_t y = 0; y < img.height; ++y) {
        for (std::int64_t x = 0; x < img.width; ++x) {
            std::uint8_t* p = pixels.data() + (y * img.width + x) * 3;
            for (int c = 0; c < 3; ++c) p[c] = quantize_unit_to_byte(img.at(c, y, x));
        }
    }
    write_png(path, pixels, img.height, img.width, 3);
}

LabelMap load_label_map(const std::filesystem::path& path) {
    std::int64_t h = 0, w = 0;
    const std::vector<std::uint8_t> pixels = read_png(path, 1, h, w);
    LabelMap labels(h, w);
    labels.data = pixels;
    return labels;
}

void save_label_map(const LabelMap& labels, const std::filesystem::path& path) {
    write_png(path, labels.data, labels.height, labels.width, 1);
}

Tensor images_to_tensor(const std::vector<Image>& images) {
    if (images.empty()) throw ConfigError("images_to_tensor: empty batch");
    const Image& first = images.front();
    Tensor t({static_cast<std::int64_t>(images.size()), first.channels, first.height, first.width});
    double* dst = t.data();
    const std::int64_t per = first.numel();
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Image& img = images[i];
        if (img.height != first.height || img.width != first.width || img.channels != first.channels) {
            throw ConfigError("images_to_tensor: mismatched image extents in batch");
        }
        std::copy(img.data.begin(), img.data.end(), dst + static_cast<std::int64_t>(i) * per);
    }
    return t;
}

Tensor image_to_tensor(const Image& image) { return images_to_tensor({image}); }

std::vector<Image> tensor_to_images(const Tensor& batch) {
    if (batch.ndim() != 4) throw ConfigError("tensor_to_images expects [B,C,H,W]");
    std::vector<Image> out;
    const std::int64_t b = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
    const std::int64_t per = c * h * w;
    out.reserve(static_cast<std::size_t>(b));
    for (std::int64_t i = 0; i < b; ++i) {
        Image img(h, w, c);
        std::copy(batch.data() + i * per, batch.data() + (i + 1) * per, img.data.begin());
        out.push_back(std::move(img));
    }
    return out;
}

LabelBatch labels_to_batch(const std::vector<LabelMap>& labels) {
    if (labels.empty()) throw ConfigError("labels_to_batch: empty batch");
    LabelBatch batch;
    batch.batch = static_cast<std::int64_t>(labels.size());
    batch.height = labels.front().height;
    batch.width = labels.front().width;
    batch.labels.reserve(static_cast<std::size_t>(batch.numel()));
    for (const LabelMap& l : labels) {
        if (l.height != batch.height || l.width != batch.width) {
            throw ConfigError("labels_to_batch: mismatched label extents in batch");
        }
        batch.labels.insert(batch.labels.end(), l.data.begin(), l.data.end());
    }
    return batch;
}

LabelMap argmax_labels(const Tensor& probs, std::int64_t batch_index) {
    if (probs.ndim() != 4) throw ConfigError("argmax_labels expects [B,N,H,W]");
    const std::int64_t nc = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
    const std::int64_t plane = h * w;
    const double* base = probs.data() + batch_index * nc * plane;
    LabelMap out(h, w);
    for (std::int64_t i = 0; i < plane; ++i) {
        double best = base[i];
        std::uint8_t arg = 0;
        for (std::int64_t c = 1; c < nc; ++c) {
            const double v = base[c * plane + i];
            if (v > best) {
                best = v;
                arg = static_cast<std::uint8_t>(c);
            }
        }
        out.data[static_cast<std::size_t>(i)] = arg;
    }
    return out;
}

Tensor one_hot_labels(const LabelBatch& labels, std::int64_t classes) {
    Tensor t({labels.batch, classes, labels.height, labels.width});
    double* dst = t.data();
    const std::int64_t plane = labels.height * labels.width;
    for (std::int64_t b = 0; b < labels.batch; ++b) {
        for (std::int64_t i = 0; i < plane; ++i) {
            const std::uint8_t lab = labels.labels[static_cast<std::size_t>(b * plane + i)];
            if (lab == LabelBatch::kIgnore) continue;
            if (lab >= classes) throw DataError("one_hot_labels: label out of range");
            dst[(b * classes + lab) * plane + i] = 1.0;
        }
    }
    return t;
}

}  // namespace sdabn
