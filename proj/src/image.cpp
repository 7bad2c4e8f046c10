#include "sonoflow/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <png.h>

#include "json.hpp"

namespace sonoflow {

size_t BinaryMask::count() const {
    size_t n = 0;
    for (uint8_t v : data) n += v;
    return n;
}

const char* to_string(CaptureMode mode) {
    return mode == CaptureMode::scan ? "scan" : "palpation";
}

CaptureMode capture_mode_from_string(const std::string& s) {
    if (s == "scan") return CaptureMode::scan;
    if (s == "palpation") return CaptureMode::palpation;
    throw ValidationError("mode '" + s + "' is not one of {scan, palpation}");
}

void validate_image(const Image& img, const std::string& what) {
    if (img.width < 2 || img.height < 2)
        throw ShapeError(what + ": dimensions " + std::to_string(img.width) + "x" +
                         std::to_string(img.height) + " (both must be >= 2)");
    if (img.data.size() != static_cast<size_t>(img.width) * img.height)
        throw ShapeError(what + ": data length does not match width*height");
    for (double v : img.data)
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw ValidationError(what + ": intensity " + std::to_string(v) +
                                  " outside [0,1]");
}

// --- PGM (P5, maxval 255) ---

namespace {

int pnm_next_int(std::istream& in, const std::string& path) {
    // skips whitespace and '#' comments per the PNM grammar
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF) throw FormatError(path + ": truncated PGM header");
    int value = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw FormatError(path + ": malformed PGM header token");
    return value;
}

Image load_pgm(std::istream& in, const std::string& path) {
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '5')
        throw FormatError(path + ": not a binary PGM (magic P5)");
    const int w = pnm_next_int(in, path);
    const int h = pnm_next_int(in, path);
    const int maxval = pnm_next_int(in, path);
    if (maxval != 255)
        throw FormatError(path + ": maxval " + std::to_string(maxval) +
                          " unsupported (must be 255)");
    // header ends with exactly one whitespace byte, already consumed by the
    // digit scanner above
    if (w < 2 || h < 2)
        throw ShapeError(path + ": dimensions " + std::to_string(w) + "x" +
                         std::to_string(h) + " (both must be >= 2)");
    std::vector<uint8_t> bytes(static_cast<size_t>(w) * h);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw FormatError(path + ": truncated PGM payload");
    Image img(w, h);
    for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
    return img;
}

// --- PNG via libpng ---

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

struct FileCloser {
    FILE* fp = nullptr;
    ~FileCloser() {
        if (fp) std::fclose(fp);
    }
};

Image load_png(FILE* fp, const std::string& path) {
    PngReadCtx ctx;
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw IoError(path + ": libpng allocation failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw IoError(path + ": libpng allocation failed");

    if (setjmp(png_jmpbuf(ctx.png)))
        throw FormatError(path + ": corrupt PNG stream");

    png_init_io(ctx.png, fp);
    png_read_info(ctx.png, ctx.info);

    const int w = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    const int h = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    const int depth = png_get_bit_depth(ctx.png, ctx.info);
    const int color = png_get_color_type(ctx.png, ctx.info);

    if (depth != 8)
        throw FormatError(path + ": bit depth " + std::to_string(depth) +
                          " unsupported (8-bit only)");
    if (w < 2 || h < 2)
        throw ShapeError(path + ": dimensions " + std::to_string(w) + "x" +
                         std::to_string(h) + " (both must be >= 2)");

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
    if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
    png_read_update_info(ctx.png, ctx.info);

    const int channels = png_get_channels(ctx.png, ctx.info);
    std::vector<uint8_t> raw(static_cast<size_t>(w) * h * channels);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y)
        rows[y] = raw.data() + static_cast<size_t>(y) * w * channels;
    png_read_image(ctx.png, rows.data());
    png_read_end(ctx.png, nullptr);

    Image img(w, h);
    for (int y = 0; y < h; ++y) {
        const uint8_t* row = rows[y];
        for (int x = 0; x < w; ++x) {
            const uint8_t* px = row + static_cast<size_t>(x) * channels;
            double v;
            switch (channels) {
                case 1: v = px[0]; break;
                case 2: v = px[0]; break; // gray + alpha, alpha ignored
                case 3:
                case 4: v = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]; break;
                default:
                    throw FormatError(path + ": channel count " + std::to_string(channels) +
                                      " unsupported");
            }
            img.at(x, y) = std::clamp(v / 255.0, 0.0, 1.0);
        }
    }
    return img;
}

void save_png(const Image& img, const std::string& path) {
    FileCloser f{std::fopen(path.c_str(), "wb")};
    if (!f.fp) throw IoError(path + ": cannot open for writing");

    PngWriteCtx ctx;
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw IoError(path + ": libpng allocation failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw IoError(path + ": libpng allocation failed");

    std::vector<uint8_t> bytes(img.size());
    for (size_t i = 0; i < img.size(); ++i)
        bytes[i] = static_cast<uint8_t>(std::lround(img.data[i] * 255.0));
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = bytes.data() + static_cast<size_t>(y) * img.width;

    if (setjmp(png_jmpbuf(ctx.png)))
        throw IoError(path + ": PNG write failed");

    png_init_io(ctx.png, f.fp);
    png_set_IHDR(ctx.png, ctx.info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    png_write_image(ctx.png, rows.data());
    png_write_end(ctx.png, nullptr);
}

std::string lower_extension(const std::string& path) {
    std::string ext = std::filesystem::path(path).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext;
}

} // namespace

Image load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": cannot open for reading");
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (in.gcount() != 2) throw FormatError(path + ": file too short");
    in.seekg(0);

    Image img;
    if (magic[0] == 'P' && magic[1] == '5') {
        img = load_pgm(in, path);
    } else if (static_cast<unsigned char>(magic[0]) == 0x89 && magic[1] == 'P') {
        in.close();
        FileCloser f{std::fopen(path.c_str(), "rb")};
        if (!f.fp) throw IoError(path + ": cannot open for reading");
        img = load_png(f.fp, path);
    } else {
        throw FormatError(path + ": unrecognized format (expected PGM P5 or PNG)");
    }
    validate_image(img, path);
    return img;
}

void save_image(const Image& img, const std::string& path) {
    validate_image(img, "save_image input");
    const std::string ext = lower_extension(path);
    if (ext == ".pgm" || ext == ".pnm") {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError(path + ": cannot open for writing");
        out << "P5\n" << img.width << " " << img.height << "\n255\n";
        std::vector<uint8_t> bytes(img.size());
        for (size_t i = 0; i < img.size(); ++i)
            bytes[i] = static_cast<uint8_t>(std::lround(img.data[i] * 255.0));
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError(path + ": write failed");
    } else if (ext == ".png") {
        save_png(img, path);
    } else {
        throw FormatError(path + ": unsupported output extension '" + ext + "'");
    }
}

BinaryMask load_mask(const std::string& path) {
    const Image img = load_image(path);
    BinaryMask mask(img.width, img.height);
    for (size_t i = 0; i < img.size(); ++i) {
        const double v = img.data[i];
        if (v != 0.0 && v != 1.0)
            throw FormatError(path + ": mask pixel value " +
                              std::to_string(std::lround(v * 255.0)) +
                              " (masks must hold only 0 and 255)");
        mask.data[i] = v == 1.0 ? 1 : 0;
    }
    return mask;
}

void save_mask(const BinaryMask& mask, const std::string& path) {
    Image img(mask.width, mask.height);
    for (size_t i = 0; i < mask.data.size(); ++i) img.data[i] = mask.data[i] ? 1.0 : 0.0;
    save_image(img, path);
}

// --- JSON-lines manifests ---

std::vector<FrameRecord> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path + ": cannot open for reading");
    const std::filesystem::path base = std::filesystem::path(path).parent_path();

    std::vector<FrameRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path + " line " + std::to_string(lineno) + ": " + e.what());
        }
        for (const char* key : {"path", "force_n", "subject", "mode"})
            if (!obj.contains(key))
                throw ParseError(path + " line " + std::to_string(lineno) +
                                 ": missing field '" + key + "'");
        FrameRecord rec;
        try {
            rec.path = (base / obj.at("path").get<std::string>()).string();
            rec.force_n = obj.at("force_n").get<double>();
            rec.subject = obj.at("subject").get<std::string>();
            rec.mode = capture_mode_from_string(obj.at("mode").get<std::string>());
            if (obj.contains("mask"))
                rec.mask_path = (base / obj.at("mask").get<std::string>()).string();
            if (obj.contains("synthetic")) rec.synthetic = obj.at("synthetic").get<bool>();
        } catch (const ValidationError& e) {
            throw ValidationError(path + " line " + std::to_string(lineno) + ": " + e.what());
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + " line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!(rec.force_n >= 0.1 && rec.force_n <= 100.0))
            throw ValidationError(path + " line " + std::to_string(lineno) + ": force_n " +
                                  std::to_string(rec.force_n) + " outside [0.1, 100] N");
        records.push_back(std::move(rec));
    }
    return records;
}

void save_manifest(const std::vector<FrameRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError(path + ": cannot open for writing");
    for (const FrameRecord& rec : records) {
        nlohmann::ordered_json obj;
        obj["path"] = rec.path;
        obj["force_n"] = rec.force_n;
        obj["subject"] = rec.subject;
        obj["mode"] = to_string(rec.mode);
        if (!rec.mask_path.empty()) obj["mask"] = rec.mask_path;
        if (rec.synthetic) obj["synthetic"] = true;
        out << obj.dump() << "\n";
    }
    if (!out) throw IoError(path + ": write failed");
}

} // namespace sonoflow
