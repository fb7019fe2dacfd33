#pragma once

#include <string>
#include <vector>

#include "srood/image.hpp"

namespace srood {

/// Shape reported by a header peek, without decoding pixel data.
struct ImageFileInfo {
  int height = 0;
  int width = 0;
  int channels = 0;
};

/// Splits "file.idx#3" into base path and fragment index.  Returns -1 for
/// no fragment.  '#' is reserved: it cannot appear in data file names.
std::string split_fragment(const std::string& path, long* index);

/// Reads width/height/channels from the file header.  Supports 8-bit PNG
/// (grayscale or RGB) and idx files of unsigned bytes with dimensions
/// (count, height, width); an idx path addresses one record via "#k".
ImageFileInfo peek_image_info(const std::string& path);

/// Decodes one image file (PNG or idx record) to doubles in [0, 1].
Image read_image_file(const std::string& path);

/// Writes an 8-bit PNG (grayscale for 1 channel, RGB for 3).  Pixel values
/// are clamped to [0, 1] and rounded to the nearest of 256 levels.  No
/// timestamp or text chunks are written; identical pixels give identical
/// bytes.
void write_png(const std::string& path, const Image& im);

/// Writes a stack of same-shaped grayscale images as one idx file
/// (unsigned byte, dims count x height x width).
void write_idx(const std::string& path, const std::vector<Image>& images);

/// Reads every record of an idx file.
std::vector<Image> read_idx_all(const std::string& path);

}  // namespace srood
