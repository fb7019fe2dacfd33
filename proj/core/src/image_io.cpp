#include "srood/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "srood/common.hpp"

namespace srood {

std::string split_fragment(const std::string& path, long* index) {
  *index = -1;
  const auto pos = path.rfind('#');
  if (pos == std::string::npos) return path;
  const std::string frag = path.substr(pos + 1);
  require(!frag.empty() && frag.find_first_not_of("0123456789") ==
                               std::string::npos,
          "malformed record fragment in path: " + path);
  *index = std::stol(frag);
  return path.substr(0, pos);
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  require(f != nullptr, "cannot open file: " + path);
  return f;
}

bool is_png_signature(const unsigned char* sig) {
  return png_sig_cmp(sig, 0, 8) == 0;
}

struct IdxHeader {
  long count = 0;
  int height = 0;
  int width = 0;
  long offset = 0;  // byte offset of the first record
};

std::uint32_t read_be32(std::FILE* f, const std::string& path) {
  unsigned char b[4];
  require(std::fread(b, 1, 4, f) == 4, "truncated idx header: " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

IdxHeader read_idx_header(std::FILE* f, const std::string& path) {
  unsigned char magic[4];
  require(std::fread(magic, 1, 4, f) == 4, "truncated idx header: " + path);
  require(magic[0] == 0 && magic[1] == 0, "not an idx file: " + path);
  require(magic[2] == 0x08, "unsupported idx element type in " + path +
                                " (only unsigned byte is supported)");
  require(magic[3] == 3, "unsupported idx rank in " + path +
                             " (expected count x height x width)");
  IdxHeader h;
  h.count = static_cast<long>(read_be32(f, path));
  h.height = static_cast<int>(read_be32(f, path));
  h.width = static_cast<int>(read_be32(f, path));
  require(h.count >= 1 && h.height >= 1 && h.width >= 1,
          "degenerate idx dimensions in " + path);
  h.offset = 16;
  return h;
}

struct PngReadCtx {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadCtx() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct PngWriteCtx {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteCtx() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

void read_png_dims(std::FILE* f, const std::string& path, ImageFileInfo* info,
                   Image* out) {
  PngReadCtx ctx;
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                   nullptr);
  require(ctx.png != nullptr, "png reader allocation failed");
  ctx.info = png_create_info_struct(ctx.png);
  require(ctx.info != nullptr, "png reader allocation failed");
  if (setjmp(png_jmpbuf(ctx.png))) fail("unreadable png file: " + path);
  png_init_io(ctx.png, f);
  png_set_sig_bytes(ctx.png, 8);
  png_read_info(ctx.png, ctx.info);

  const int bit_depth = png_get_bit_depth(ctx.png, ctx.info);
  const int color_type = png_get_color_type(ctx.png, ctx.info);
  require(bit_depth == 8, "unsupported png bit depth in " + path +
                              " (only 8-bit is supported)");
  int channels = 0;
  if (color_type == PNG_COLOR_TYPE_GRAY) {
    channels = 1;
  } else if (color_type == PNG_COLOR_TYPE_RGB) {
    channels = 3;
  } else {
    fail("unsupported png color type in " + path +
         " (only grayscale and RGB are supported)");
  }
  info->height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
  info->width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
  info->channels = channels;
  if (!out) return;

  *out = Image::zeros(info->height, info->width, channels);
  std::vector<unsigned char> row(static_cast<std::size_t>(info->width) *
                                 channels);
  for (int y = 0; y < info->height; ++y) {
    png_read_row(ctx.png, row.data(), nullptr);
    for (int x = 0; x < info->width; ++x)
      for (int c = 0; c < channels; ++c)
        out->at(c, y, x) = row[static_cast<std::size_t>(x) * channels + c] / 255.0;
  }
  png_read_end(ctx.png, nullptr);
}

Image read_idx_record(std::FILE* f, const IdxHeader& h, long k,
                      const std::string& path) {
  require(k >= 0 && k < h.count,
          "record index out of range in " + path + "#" + std::to_string(k) +
              " (file has " + std::to_string(h.count) + " records)");
  const std::size_t rec = static_cast<std::size_t>(h.height) * h.width;
  require(std::fseek(f, h.offset + static_cast<long>(rec) * k, SEEK_SET) == 0,
          "seek failed in idx file: " + path);
  std::vector<unsigned char> buf(rec);
  require(std::fread(buf.data(), 1, rec, f) == rec,
          "truncated idx payload: " + path);
  Image im = Image::zeros(h.height, h.width, 1);
  for (std::size_t i = 0; i < rec; ++i) im.pix[i] = buf[i] / 255.0;
  return im;
}

}  // namespace

ImageFileInfo peek_image_info(const std::string& path) {
  long frag = -1;
  const std::string base = split_fragment(path, &frag);
  FilePtr f = open_file(base, "rb");
  unsigned char sig[8];
  require(std::fread(sig, 1, 8, f.get()) == 8, "unreadable file: " + base);
  if (is_png_signature(sig)) {
    require(frag < 0, "png files do not support record fragments: " + path);
    ImageFileInfo info;
    read_png_dims(f.get(), base, &info, nullptr);
    return info;
  }
  std::rewind(f.get());
  const IdxHeader h = read_idx_header(f.get(), base);
  const long k = frag < 0 ? 0 : frag;
  require(k < h.count, "record index out of range in " + path + " (file has " +
                           std::to_string(h.count) + " records)");
  return ImageFileInfo{h.height, h.width, 1};
}

Image read_image_file(const std::string& path) {
  long frag = -1;
  const std::string base = split_fragment(path, &frag);
  FilePtr f = open_file(base, "rb");
  unsigned char sig[8];
  require(std::fread(sig, 1, 8, f.get()) == 8, "unreadable file: " + base);
  if (is_png_signature(sig)) {
    require(frag < 0, "png files do not support record fragments: " + path);
    ImageFileInfo info;
    Image im;
    read_png_dims(f.get(), base, &info, &im);
    return im;
  }
  std::rewind(f.get());
  const IdxHeader h = read_idx_header(f.get(), base);
  return read_idx_record(f.get(), h, frag < 0 ? 0 : frag, base);
}

void write_png(const std::string& path, const Image& im) {
  require(im.channels == 1 || im.channels == 3,
          "png output supports 1 or 3 channels");
  require(im.height >= 1 && im.width >= 1, "empty image");
  FilePtr f = open_file(path, "wb");
  PngWriteCtx ctx;
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                    nullptr);
  require(ctx.png != nullptr, "png writer allocation failed");
  ctx.info = png_create_info_struct(ctx.png);
  require(ctx.info != nullptr, "png writer allocation failed");
  if (setjmp(png_jmpbuf(ctx.png))) fail("png write failed: " + path);
  png_init_io(ctx.png, f.get());
  png_set_IHDR(ctx.png, ctx.info, im.width, im.height, 8,
               im.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(ctx.png, 6);
  png_write_info(ctx.png, ctx.info);
  std::vector<unsigned char> row(static_cast<std::size_t>(im.width) *
                                 im.channels);
  for (int y = 0; y < im.height; ++y) {
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < im.channels; ++c) {
        const double v = std::clamp(im.at(c, y, x), 0.0, 1.0);
        row[static_cast<std::size_t>(x) * im.channels + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    png_write_row(ctx.png, row.data());
  }
  png_write_end(ctx.png, ctx.info);
}

void write_idx(const std::string& path, const std::vector<Image>& images) {
  require(!images.empty(), "cannot write an empty idx file");
  const int h = images.front().height;
  const int w = images.front().width;
  for (const Image& im : images)
    require(im.channels == 1 && im.height == h && im.width == w,
            "idx output requires same-shaped grayscale images");
  FilePtr f = open_file(path, "wb");
  const auto put_be32 = [&](std::uint32_t v) {
    const unsigned char b[4] = {
        static_cast<unsigned char>(v >> 24),
        static_cast<unsigned char>(v >> 16),
        static_cast<unsigned char>(v >> 8),
        static_cast<unsigned char>(v),
    };
    require(std::fwrite(b, 1, 4, f.get()) == 4, "write failed: " + path);
  };
  const unsigned char magic[4] = {0, 0, 0x08, 3};
  require(std::fwrite(magic, 1, 4, f.get()) == 4, "write failed: " + path);
  put_be32(static_cast<std::uint32_t>(images.size()));
  put_be32(static_cast<std::uint32_t>(h));
  put_be32(static_cast<std::uint32_t>(w));
  std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w);
  for (const Image& im : images) {
    for (std::size_t i = 0; i < buf.size(); ++i) {
      const double v = std::clamp(im.pix[i], 0.0, 1.0);
      buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    require(std::fwrite(buf.data(), 1, buf.size(), f.get()) == buf.size(),
            "write failed: " + path);
  }
}

std::vector<Image> read_idx_all(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  const IdxHeader h = read_idx_header(f.get(), path);
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(h.count));
  for (long k = 0; k < h.count; ++k)
    out.push_back(read_idx_record(f.get(), h, k, path));
  return out;
}

}  // namespace srood
