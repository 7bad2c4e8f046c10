#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonoflow/errors.hpp"

namespace sonoflow {

/// Dense 2D grayscale raster. Intensities are kept normalized to [0,1];
/// 8-bit quantization happens only when a file is written.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data; // row-major, height rows of width pixels

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    double at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return data.size(); }
};

/// Row-major raster of {0,1} values; used for segmentation labels and
/// keypoint feature maps.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;

    BinaryMask() = default;
    BinaryMask(int w, int h, uint8_t fill = 0)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }

    size_t count() const; // number of set pixels
};

enum class CaptureMode { scan, palpation };

const char* to_string(CaptureMode mode);
CaptureMode capture_mode_from_string(const std::string& s);

/// An image tagged with the probe contact force at capture.
struct ForceFrame {
    Image image;
    double force_n = 0.0; // Newtons, sane range [0.1, 100]
    std::string subject;
    CaptureMode mode = CaptureMode::scan;
};

/// One manifest line: where a frame lives on disk plus its tags. The image
/// itself is loaded on demand.
struct FrameRecord {
    std::string path;      // resolved against the manifest's directory
    double force_n = 0.0;
    std::string subject;
    CaptureMode mode = CaptureMode::scan;
    std::string mask_path; // optional; empty when the frame has no label
    bool synthetic = false;
};

/// Throws ValidationError/ShapeError if the image violates its invariants
/// (dims >= 2, all values finite in [0,1]).
void validate_image(const Image& img, const std::string& what = "image");

/// Reads an 8-bit grayscale PGM (P5) or 8-bit PNG. RGB PNGs are collapsed
/// to luminance 0.299 R + 0.587 G + 0.114 B. Values map as v/255.
Image load_image(const std::string& path);

/// Writes round(v*255) as 8-bit. Format chosen by extension: .pgm/.pnm
/// emit binary P5, .png emits grayscale PNG.
void save_image(const Image& img, const std::string& path);

/// Mask files are ordinary 8-bit images holding only bytes 0 and 255.
BinaryMask load_mask(const std::string& path);
void save_mask(const BinaryMask& mask, const std::string& path);

/// Parses a UTF-8 JSON-lines manifest, one object per line with keys
/// {path, force_n, subject, mode} and optional {mask, synthetic}. Records
/// come back in file order; paths are resolved relative to the manifest.
std::vector<FrameRecord> load_manifest(const std::string& path);

/// Writes records one JSON object per line. Paths are written as stored.
void save_manifest(const std::vector<FrameRecord>& records, const std::string& path);

} // namespace sonoflow
