#include "sonoflow/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sonoflow/errors.hpp"

namespace sonoflow {

namespace {

// Deterministic 64-bit LCG (Knuth's MMIX constants); uniform doubles built
// from the top 53 bits so results are identical on every platform.
struct Lcg {
    std::uint64_t state;
    explicit Lcg(std::uint64_t seed) : state(seed) {}
    double next_u01() {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        return static_cast<double>(state >> 11) * 0x1.0p-53;
    }
};

double smoothstep(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

Image gaussian_blur(const Image& img, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    const int w = img.width, h = img.height;
    Image tmp = img, out = img;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * img.at(std::clamp(x + i, 0, w - 1), y);
            tmp.at(x, y) = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * tmp.at(x, std::clamp(y + i, 0, h - 1));
            out.at(x, y) = acc;
        }
    return out;
}

// High-contrast blurred speckle in [0, 1]. Three bands: fine grain carries
// the subpixel detail while the mid and ultra-coarse clouds keep texture and
// blob-scale structure visible in the heavily downsampled copies a
// coarse-to-fine solver (and its blob detector) works with.
Image speckle_field(const PhantomSpec& spec) {
    Image noise;
    noise.width = spec.width;
    noise.height = spec.height;
    noise.data.resize(static_cast<size_t>(spec.width) * spec.height);
    Lcg rng(spec.speckle_seed);
    for (double& v : noise.data) v = rng.next_u01();
    const Image fine = gaussian_blur(noise, 1.2);
    const Image mid = gaussian_blur(noise, 3.5);
    const Image coarse = gaussian_blur(noise, 12.0);
    Image out = noise;
    for (size_t i = 0; i < out.data.size(); ++i) {
        const double v = 0.5 + 5.0 * (fine.data[i] - 0.5)
                       + 8.0 * (mid.data[i] - 0.5)
                       + 24.0 * (coarse.data[i] - 0.5);
        out.data[i] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

Image rest_image(const PhantomSpec& spec) {
    const Image s = speckle_field(spec);
    Image img = s;
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            const double sp = s.at(x, y);
            double v = 0.30 + 0.50 * sp;
            for (const Vessel& ves : spec.vessels) {
                const double nx = (x - ves.cx) / ves.a;
                const double ny = (y - ves.cy) / ves.b;
                const double d = (std::sqrt(nx * nx + ny * ny) - 1.0)
                               * std::min(ves.a, ves.b);
                const double alpha = 1.0 - smoothstep((d + 0.75) / 1.5);
                if (alpha > 0.0) {
                    const double dark = ves.intensity * (0.55 + 0.45 * sp);
                    v = alpha * dark + (1.0 - alpha) * v;
                }
            }
            img.at(x, y) = v;
        }
    }
    return img;
}

// Geometry of one vessel in the compressed frame.
struct VesselPose {
    double cx, cy;  // deformed-frame center
    double b_def;   // deformed vertical radius (after squash)
    double squash;  // m(rho<=1): vertical stretch toward the rest frame
};

constexpr double kBlendOuter = 3.0; // squash influence ends at rho = 3

struct MapGeometry {
    double delta;   // probe indentation, px
    double depth;   // depth denominator (height - 1)
    double half_w;  // lateral half-width (width - 1) / 2
    double lateral; // lateral bulge coefficient kappa * delta
    std::vector<VesselPose> poses;
};

MapGeometry map_geometry(const PhantomSpec& spec, double force) {
    MapGeometry g;
    g.delta = spec.compression_gain * force;
    g.depth = spec.height - 1.0;
    g.half_w = (spec.width - 1.0) / 2.0;
    g.lateral = 0.25 * g.delta;
    if (g.delta >= 0.5 * g.depth)
        throw DomainError("phantom: compression exceeds half the image depth");
    const double axial = 1.0 - g.delta / g.depth; // d(rest)/d(deformed)
    for (const Vessel& v : spec.vessels) {
        VesselPose p;
        p.cy = (v.cy - g.delta) / axial;
        const double t = 1.0 - p.cy / g.depth;
        const double s = v.cx / g.half_w - 1.0;
        p.cx = v.cx + g.lateral * s * (1.0 - s * s) * t;
        const double b_global = v.b / axial;
        p.b_def = v.b * std::max(1.0 - v.stiffness * force / kForceScale,
                                 kMinSquash);
        p.squash = b_global / p.b_def;
        g.poses.push_back(p);
    }
    return g;
}

// Radially blended vertical squash around one vessel. Identity outside
// rho = kBlendOuter; pure scaling inside the deformed ellipse, so the vessel
// boundary stays an exact ellipse.
void apply_vessel(const Vessel& v, const VesselPose& p, double& x, double& y) {
    const double rx = (x - p.cx) / v.a;
    const double ry = (y - p.cy) / p.b_def;
    const double rho = std::sqrt(rx * rx + ry * ry);
    if (rho >= kBlendOuter) return;
    const double psi = 1.0 - smoothstep((rho - 1.0) / (kBlendOuter - 1.0));
    const double m = 1.0 + (p.squash - 1.0) * psi;
    y = p.cy + (y - p.cy) * m;
}

} // namespace

void validate_phantom_spec(const PhantomSpec& spec) {
    if (spec.width < 16 || spec.height < 16)
        throw ShapeError("phantom: raster must be at least 16x16");
    if (!(spec.compression_gain > 0.0))
        throw DomainError("phantom: compression_gain must be positive");
    for (const Vessel& v : spec.vessels) {
        if (!(v.a >= 1.0) || !(v.b >= 1.0))
            throw DomainError("phantom: vessel radii must be at least 1 px");
        if (v.cx - v.a < 0.0 || v.cx + v.a > spec.width - 1
            || v.cy - v.b < 0.0 || v.cy + v.b > spec.height - 1)
            throw DomainError("phantom: vessel extends outside the raster");
        if (!(v.intensity >= 0.0 && v.intensity <= 1.0))
            throw DomainError("phantom: vessel intensity must be in [0, 1]");
        if (!(v.stiffness > 0.0 && v.stiffness <= 1.0))
            throw DomainError("phantom: vessel stiffness must be in (0, 1]");
    }
}

void phantom_map(const PhantomSpec& spec, double force, double x, double y,
                 double& rx, double& ry) {
    const MapGeometry g = map_geometry(spec, force);
    double qx = x, qy = y;
    for (size_t i = 0; i < spec.vessels.size(); ++i)
        apply_vessel(spec.vessels[i], g.poses[i], qx, qy);
    const double t = 1.0 - qy / g.depth;
    const double s = qx / g.half_w - 1.0;
    rx = qx - g.lateral * s * (1.0 - s * s) * t;
    ry = qy + g.delta * t;
}

namespace {

// Same map, but with the per-force geometry precomputed.
void map_point(const PhantomSpec& spec, const MapGeometry& g,
               double x, double y, double& rx, double& ry) {
    double qx = x, qy = y;
    for (size_t i = 0; i < spec.vessels.size(); ++i)
        apply_vessel(spec.vessels[i], g.poses[i], qx, qy);
    const double t = 1.0 - qy / g.depth;
    const double s = qx / g.half_w - 1.0;
    rx = qx - g.lateral * s * (1.0 - s * s) * t;
    ry = qy + g.delta * t;
}

} // namespace

PhantomFrame render(const PhantomSpec& spec, double force) {
    validate_phantom_spec(spec);
    if (force < 0.0)
        throw DomainError("phantom: force must be non-negative");
    const MapGeometry g = map_geometry(spec, force);

    PhantomFrame f;
    f.force_n = force;
    f.field.width = spec.width;
    f.field.height = spec.height;
    f.field.dx.resize(static_cast<size_t>(spec.width) * spec.height);
    f.field.dy.resize(f.field.dx.size());
    f.mask.width = spec.width;
    f.mask.height = spec.height;
    f.mask.data.resize(f.field.dx.size());

    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            double rx, ry;
            map_point(spec, g, x, y, rx, ry);
            const size_t i = static_cast<size_t>(y) * spec.width + x;
            f.field.dx[i] = static_cast<float>(rx - x);
            f.field.dy[i] = static_cast<float>(ry - y);
            bool inside = false;
            for (const Vessel& v : spec.vessels) {
                const double nx = (rx - v.cx) / v.a;
                const double ny = (ry - v.cy) / v.b;
                if (nx * nx + ny * ny <= 1.0) { inside = true; break; }
            }
            f.mask.data[i] = inside ? 1 : 0;
        }
    }
    // Rendering through the stored field keeps image, mask and ground truth
    // exactly consistent (a zero field reproduces the rest frame bit for bit).
    f.image = warp_image(f.field, rest_image(spec));
    return f;
}

std::vector<PhantomFrame> render_sweep(const PhantomSpec& spec,
                                       const std::vector<double>& forces) {
    if (forces.empty())
        throw DomainError("phantom: sweep needs at least one force");
    std::vector<PhantomFrame> out;
    out.reserve(forces.size());
    for (double f : forces) out.push_back(render(spec, f));
    return out;
}

DeformationField pair_field(const PhantomSpec& spec, double f_ref, double f_def) {
    validate_phantom_spec(spec);
    const MapGeometry g_ref = map_geometry(spec, f_ref);
    const MapGeometry g_def = map_geometry(spec, f_def);

    DeformationField u;
    u.width = spec.width;
    u.height = spec.height;
    u.dx.resize(static_cast<size_t>(spec.width) * spec.height);
    u.dy.resize(u.dx.size());

    const double h = 0.25; // step for the numeric Jacobian
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            double qx, qy;
            map_point(spec, g_def, x, y, qx, qy);
            // Newton-solve map_ref(r) = q starting from the pixel itself.
            double rx = x, ry = y;
            double fx = 0.0, fy = 0.0;
            bool ok = false;
            for (int it = 0; it < 30; ++it) {
                double mx, my;
                map_point(spec, g_ref, rx, ry, mx, my);
                fx = mx - qx;
                fy = my - qy;
                if (std::abs(fx) < 1e-9 && std::abs(fy) < 1e-9) { ok = true; break; }
                double ax, ay, bx, by, cx, cy, dx, dy;
                map_point(spec, g_ref, rx + h, ry, ax, ay);
                map_point(spec, g_ref, rx - h, ry, bx, by);
                map_point(spec, g_ref, rx, ry + h, cx, cy);
                map_point(spec, g_ref, rx, ry - h, dx, dy);
                const double j11 = (ax - bx) / (2.0 * h);
                const double j21 = (ay - by) / (2.0 * h);
                const double j12 = (cx - dx) / (2.0 * h);
                const double j22 = (cy - dy) / (2.0 * h);
                const double det = j11 * j22 - j12 * j21;
                if (std::abs(det) < 1e-12)
                    throw NumericalError("pair_field: singular Jacobian");
                rx -= (j22 * fx - j12 * fy) / det;
                ry -= (-j21 * fx + j11 * fy) / det;
            }
            if (!ok && (std::abs(fx) > 1e-4 || std::abs(fy) > 1e-4))
                throw NumericalError("pair_field: Newton iteration did not converge");
            const size_t i = static_cast<size_t>(y) * spec.width + x;
            u.dx[i] = static_cast<float>(rx - x);
            u.dy[i] = static_cast<float>(ry - y);
        }
    }
    return u;
}

PhantomSpec default_phantom_spec(int width, int height) {
    PhantomSpec spec;
    spec.width = width;
    spec.height = height;
    spec.speckle_seed = 1;
    spec.compression_gain = 0.78;
    spec.subject = "phantom";
    Vessel artery;
    artery.cx = 0.32 * width;
    artery.cy = 0.42 * height;
    artery.a = 0.085 * width;
    artery.b = 0.075 * height;
    artery.intensity = 0.10;
    artery.stiffness = 0.30;
    Vessel vein;
    vein.cx = 0.68 * width;
    vein.cy = 0.55 * height;
    vein.a = 0.11 * width;
    vein.b = 0.085 * height;
    vein.intensity = 0.14;
    vein.stiffness = 0.55;
    spec.vessels = {artery, vein};
    validate_phantom_spec(spec);
    return spec;
}

PhantomSpec load_phantom_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open phantom spec '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("phantom spec '" + path + "': " + e.what());
    }
    PhantomSpec spec;
    try {
        spec.width = j.at("width").get<int>();
        spec.height = j.at("height").get<int>();
        if (j.contains("speckle_seed"))
            spec.speckle_seed = j["speckle_seed"].get<std::uint64_t>();
        if (j.contains("compression_gain"))
            spec.compression_gain = j["compression_gain"].get<double>();
        if (j.contains("subject"))
            spec.subject = j["subject"].get<std::string>();
        for (const auto& vj : j.value("vessels", nlohmann::json::array())) {
            Vessel v;
            v.cx = vj.at("cx").get<double>();
            v.cy = vj.at("cy").get<double>();
            v.a = vj.at("a").get<double>();
            v.b = vj.at("b").get<double>();
            if (vj.contains("intensity")) v.intensity = vj["intensity"].get<double>();
            if (vj.contains("stiffness")) v.stiffness = vj["stiffness"].get<double>();
            spec.vessels.push_back(v);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("phantom spec '" + path + "': " + e.what());
    }
    validate_phantom_spec(spec);
    return spec;
}

void save_phantom_spec(const PhantomSpec& spec, const std::string& path) {
    nlohmann::ordered_json j;
    j["width"] = spec.width;
    j["height"] = spec.height;
    j["speckle_seed"] = spec.speckle_seed;
    j["compression_gain"] = spec.compression_gain;
    j["subject"] = spec.subject;
    j["vessels"] = nlohmann::ordered_json::array();
    for (const Vessel& v : spec.vessels) {
        nlohmann::ordered_json vj;
        vj["cx"] = v.cx;
        vj["cy"] = v.cy;
        vj["a"] = v.a;
        vj["b"] = v.b;
        vj["intensity"] = v.intensity;
        vj["stiffness"] = v.stiffness;
        j["vessels"].push_back(vj);
    }
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write phantom spec '" + path + "'");
    out << j.dump(2) << "\n";
}

namespace {

std::string force_tag(double f) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", f);
    std::string s(buf);
    for (char& c : s)
        if (c == '.') c = 'p';
    return s;
}

} // namespace

std::vector<FrameRecord> write_sweep(const PhantomSpec& spec,
                                     const std::vector<double>& forces,
                                     const std::string& out_dir) {
    if (forces.empty())
        throw DomainError("phantom: sweep needs at least one force");
    for (double f : forces)
        if (f < 0.1 || f > 100.0)
            throw DomainError("phantom: sweep forces must lie in [0.1, 100] N");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw IoError("cannot create output directory '" + out_dir + "'");

    std::vector<FrameRecord> records;
    for (double f : forces) {
        const PhantomFrame frame = render(spec, f);
        const std::string base = spec.subject + "_f" + force_tag(f);
        const auto dir = std::filesystem::path(out_dir);
        save_image(frame.image, (dir / (base + ".png")).string());
        save_mask(frame.mask, (dir / (base + "_mask.png")).string());
        write_field(frame.field, (dir / (base + ".udf")).string());
        FrameRecord rec;
        rec.path = base + ".png";
        rec.force_n = f;
        rec.subject = spec.subject;
        rec.mode = CaptureMode::palpation;
        rec.mask_path = base + "_mask.png";
        rec.synthetic = false;
        records.push_back(rec);
    }
    // The manifest keeps entries relative to its own directory; the caller
    // gets paths it can open from wherever it is.
    save_manifest(records, (std::filesystem::path(out_dir) / "manifest.jsonl").string());
    for (FrameRecord& rec : records) {
        rec.path = (std::filesystem::path(out_dir) / rec.path).string();
        rec.mask_path = (std::filesystem::path(out_dir) / rec.mask_path).string();
    }
    return records;
}

} // namespace sonoflow
