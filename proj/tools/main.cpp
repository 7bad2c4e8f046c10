// sonoflow command-line interface.
//
// Exit codes: 0 success, 1 usage or validation error, 2 I/O error,
// 3 numerical failure.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sonoflow/errors.hpp"
#include "sonoflow/image.hpp"
#include "sonoflow/loss.hpp"
#include "sonoflow/metrics.hpp"
#include "sonoflow/overlay.hpp"
#include "sonoflow/phantom.hpp"
#include "sonoflow/solver.hpp"
#include "sonoflow/synth.hpp"
#include "sonoflow/warp.hpp"

namespace {

using nlohmann::ordered_json;

// JSON has no infinity; serialize the PSNR ceiling case as a string.
ordered_json json_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    return v;
}

void print_json(const ordered_json& j) { std::cout << j.dump(2) << "\n"; }

struct SolverFlags {
    std::string variant = "us";
    sonoflow::SolverConfig cfg;

    void attach(CLI::App* cmd) {
        cmd->add_option("--loss", variant,
                        "Loss variant: us, cyclic, fa-cyclic")
            ->capture_default_str();
        cmd->add_option("--beta", cfg.loss.beta,
                        "Similarity weight in [0, 1]")
            ->capture_default_str();
        cmd->add_option("--scales", cfg.loss.ms_scales,
                        "MS-SSIM scales (1-3)")
            ->capture_default_str();
        cmd->add_option("--feature-radius", cfg.loss.feature_radius,
                        "Feature disk radius, px")
            ->capture_default_str();
        cmd->add_option("--levels", cfg.pyramid_levels, "Pyramid levels")
            ->capture_default_str();
        cmd->add_option("--iters", cfg.iters_per_level,
                        "Iterations per level")
            ->capture_default_str();
        cmd->add_option("--step", cfg.step_size, "Initial step size")
            ->capture_default_str();
        cmd->add_option("--momentum", cfg.momentum, "Momentum in [0, 1)")
            ->capture_default_str();
        cmd->add_option("--tol", cfg.converge_rel_tol,
                        "Relative convergence tolerance")
            ->capture_default_str();
    }

    sonoflow::SolverConfig resolve() const {
        sonoflow::SolverConfig c = cfg;
        c.loss.variant = sonoflow::loss_variant_from_string(variant);
        return c;
    }
};

void setup_register(CLI::App& app) {
    auto* cmd = app.add_subcommand(
        "register", "Estimate the deformation field between two images");
    auto ref_path = std::make_shared<std::string>();
    auto def_path = std::make_shared<std::string>();
    auto out_field = std::make_shared<std::string>();
    auto out_rd = std::make_shared<std::string>();
    auto out_recon = std::make_shared<std::string>();
    auto flags = std::make_shared<SolverFlags>();
    cmd->add_option("--ref", *ref_path, "Reference image")->required();
    cmd->add_option("--def", *def_path, "Deformed image")->required();
    cmd->add_option("--out", *out_field, "Output field (.udf)");
    cmd->add_option("--out-rd", *out_rd,
                    "Output reverse field (.udf, cyclic variants)");
    cmd->add_option("--out-recon", *out_recon, "Output reconstruction image");
    flags->attach(cmd);
    cmd->callback([=] {
        const sonoflow::SolverConfig cfg = flags->resolve();
        const sonoflow::Image ref = sonoflow::load_image(*ref_path);
        const sonoflow::Image def = sonoflow::load_image(*def_path);
        const sonoflow::RegistrationResult res =
            sonoflow::register_images(def, ref, cfg);
        if (!out_field->empty()) sonoflow::write_field(res.field, *out_field);
        if (!out_rd->empty()) {
            if (res.field_rd.dx.empty())
                throw sonoflow::ValidationError(
                    "--out-rd requires a cyclic loss variant");
            sonoflow::write_field(res.field_rd, *out_rd);
        }
        if (!out_recon->empty())
            sonoflow::save_image(res.reconstructed, *out_recon);

        ordered_json j;
        j["loss"] = json_number(res.final_loss.total);
        j["ssim_term"] = json_number(res.final_loss.ssim_term);
        j["smooth_term"] = json_number(res.final_loss.smooth_term);
        j["iterations"] = res.iterations_used;
        j["ssim"] = json_number(sonoflow::ssim(def, res.reconstructed));
        j["psnr"] = json_number(sonoflow::psnr(def, res.reconstructed));
        print_json(j);
    });
}

void setup_warp(CLI::App& app) {
    auto* cmd = app.add_subcommand(
        "warp", "Apply a deformation field to an image or mask");
    auto field_path = std::make_shared<std::string>();
    auto in_path = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>();
    auto as_mask = std::make_shared<bool>(false);
    cmd->add_option("--field", *field_path, "Deformation field (.udf)")
        ->required();
    cmd->add_option("--in", *in_path, "Input image")->required();
    cmd->add_option("--out", *out_path, "Output image")->required();
    cmd->add_flag("--mask", *as_mask,
                  "Treat input as a binary mask (nearest-neighbor)");
    cmd->callback([=] {
        const sonoflow::DeformationField field =
            sonoflow::read_field(*field_path);
        if (*as_mask) {
            const sonoflow::BinaryMask mask = sonoflow::load_mask(*in_path);
            sonoflow::save_mask(sonoflow::warp_mask(field, mask), *out_path);
        } else {
            const sonoflow::Image img = sonoflow::load_image(*in_path);
            sonoflow::save_image(sonoflow::warp_image(field, img), *out_path);
        }
    });
}

void setup_eval(CLI::App& app) {
    auto* cmd = app.add_subcommand("eval", "Compute a metric between inputs");
    cmd->require_subcommand(1);
    auto a_path = std::make_shared<std::string>();
    auto b_path = std::make_shared<std::string>();
    auto mask_path = std::make_shared<std::string>();
    auto scales = std::make_shared<int>(3);

    auto report = [](const sonoflow::MetricReport& r) {
        ordered_json j;
        j["name"] = r.name;
        j["value"] = json_number(r.value);
        if (!r.per_scale.empty()) {
            ordered_json arr = ordered_json::array();
            for (double v : r.per_scale) arr.push_back(json_number(v));
            j["per_scale"] = arr;
        }
        print_json(j);
    };

    auto add_pair = [&](CLI::App* sub) {
        sub->add_option("--a", *a_path, "First input")->required();
        sub->add_option("--b", *b_path, "Second input")->required();
    };

    auto* s = cmd->add_subcommand("ssim", "Structural similarity");
    add_pair(s);
    s->callback([=] {
        sonoflow::MetricReport r;
        r.name = "ssim";
        r.value = sonoflow::ssim(sonoflow::load_image(*a_path),
                                 sonoflow::load_image(*b_path));
        report(r);
    });

    auto* ms = cmd->add_subcommand("ms-ssim", "Multi-scale SSIM");
    add_pair(ms);
    ms->add_option("--scales", *scales, "Scale count (1-3)")
        ->capture_default_str();
    ms->callback([=] {
        sonoflow::MetricReport r;
        r.name = "ms-ssim";
        r.value = sonoflow::ms_ssim(sonoflow::load_image(*a_path),
                                    sonoflow::load_image(*b_path), *scales,
                                    &r.per_scale);
        report(r);
    });

    auto* p = cmd->add_subcommand("psnr", "Peak signal-to-noise ratio (dB)");
    add_pair(p);
    p->callback([=] {
        sonoflow::MetricReport r;
        r.name = "psnr";
        r.value = sonoflow::psnr(sonoflow::load_image(*a_path),
                                 sonoflow::load_image(*b_path));
        report(r);
    });

    auto* f = cmd->add_subcommand("f-ssim", "SSIM restricted to a mask");
    add_pair(f);
    f->add_option("--mask", *mask_path, "Binary mask image")->required();
    f->callback([=] {
        sonoflow::MetricReport r;
        r.name = "f-ssim";
        r.value = sonoflow::f_ssim(sonoflow::load_image(*a_path),
                                   sonoflow::load_image(*b_path),
                                   sonoflow::load_mask(*mask_path));
        report(r);
    });

    auto* i = cmd->add_subcommand("iou", "Mask intersection over union");
    add_pair(i);
    i->callback([=] {
        sonoflow::MetricReport r;
        r.name = "iou";
        r.value = sonoflow::iou(sonoflow::load_mask(*a_path),
                                sonoflow::load_mask(*b_path));
        report(r);
    });

    auto* e = cmd->add_subcommand("epe", "Mean endpoint error between fields");
    add_pair(e);
    e->callback([=] {
        sonoflow::MetricReport r;
        r.name = "epe";
        r.value = sonoflow::endpoint_error(sonoflow::read_field(*a_path),
                                           sonoflow::read_field(*b_path));
        report(r);
    });
}

void setup_synth(CLI::App& app) {
    auto* cmd = app.add_subcommand(
        "synth", "Synthesize intermediate-force frames from a manifest");
    auto manifest = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    auto flags = std::make_shared<SolverFlags>();
    auto opt = std::make_shared<sonoflow::AugmentOptions>();
    opt->interp.f_ref = 2.0;
    opt->interp.f_def = 10.0;
    opt->interp.f_new = {4.0, 6.0, 8.0};
    cmd->add_option("--manifest", *manifest, "Input manifest (JSON lines)")
        ->required();
    cmd->add_option("--out", *out_dir, "Output directory")->required();
    cmd->add_option("--f-ref", opt->interp.f_ref, "Reference force, N")
        ->capture_default_str();
    cmd->add_option("--f-def", opt->interp.f_def, "Deformed force, N")
        ->capture_default_str();
    cmd->add_option("--f-new", opt->interp.f_new,
                    "Forces to synthesize (comma separated)")
        ->delimiter(',')
        ->capture_default_str();
    cmd->add_flag("--zero-self", opt->zero_self,
                  "Use a zero field instead of self-registration");
    cmd->add_option("--jobs", opt->jobs, "Worker threads across pairs")
        ->capture_default_str();
    flags->attach(cmd);
    cmd->callback([=] {
        opt->solver = flags->resolve();
        const sonoflow::AugmentReport rep =
            sonoflow::augment_dataset(*manifest, *opt, *out_dir);
        for (const std::string& w : rep.warnings)
            std::cerr << "warning: " << w << "\n";
        ordered_json j;
        j["pairs_registered"] = rep.pairs_registered;
        j["frames_written"] = rep.frames_written;
        j["unpaired_skipped"] = rep.unpaired_skipped;
        j["failures"] = rep.failures;
        j["manifest"] = rep.manifest_path;
        print_json(j);
    });
}

void setup_phantom(CLI::App& app) {
    auto* cmd = app.add_subcommand(
        "phantom", "Render a synthetic compression sweep");
    auto spec_path = std::make_shared<std::string>();
    auto out_dir = std::make_shared<std::string>();
    auto dump_spec = std::make_shared<std::string>();
    auto forces = std::make_shared<std::vector<double>>(
        std::vector<double>{2.0, 4.0, 6.0, 8.0, 10.0});
    auto size = std::make_shared<int>(128);
    auto seed = std::make_shared<std::uint64_t>(0);
    cmd->add_option("--out", *out_dir, "Output directory")->required();
    cmd->add_option("--spec", *spec_path, "Phantom spec (JSON)");
    cmd->add_option("--forces", *forces, "Forces to render, N")
        ->delimiter(',')
        ->capture_default_str();
    cmd->add_option("--size", *size, "Raster size for the built-in spec")
        ->capture_default_str();
    auto* seed_opt = cmd->add_option("--seed", *seed, "Override speckle seed");
    cmd->add_option("--dump-spec", *dump_spec,
                    "Also write the effective spec as JSON");
    cmd->callback([=] {
        sonoflow::PhantomSpec spec =
            spec_path->empty() ? sonoflow::default_phantom_spec(*size, *size)
                               : sonoflow::load_phantom_spec(*spec_path);
        if (seed_opt->count() > 0) spec.speckle_seed = *seed;
        const std::vector<sonoflow::FrameRecord> records =
            sonoflow::write_sweep(spec, *forces, *out_dir);
        if (!dump_spec->empty()) sonoflow::save_phantom_spec(spec, *dump_spec);
        ordered_json j;
        j["frames"] = records.size();
        j["manifest"] = (*out_dir) + "/manifest.jsonl";
        print_json(j);
    });
}

void setup_bench(CLI::App& app) {
    auto* cmd = app.add_subcommand("bench", "Time registration throughput");
    auto size = std::make_shared<int>(256);
    auto reps = std::make_shared<int>(3);
    auto flags = std::make_shared<SolverFlags>();
    cmd->add_option("--size", *size, "Image side length")->capture_default_str();
    cmd->add_option("--reps", *reps, "Repetitions")->capture_default_str();
    flags->attach(cmd);
    cmd->callback([=] {
        const sonoflow::BenchReport rep =
            sonoflow::bench_register(*size, flags->resolve(), *reps);
        ordered_json j;
        j["size"] = rep.size;
        j["repetitions"] = rep.repetitions;
        ordered_json runs = ordered_json::array();
        for (double ms : rep.per_run_ms) runs.push_back(json_number(ms));
        j["per_run_ms"] = runs;
        j["total_ms"] = json_number(rep.total_ms);
        j["mean_ms"] = json_number(rep.mean_ms);
        j["median_ms"] = json_number(rep.median_ms);
        j["hz"] = json_number(rep.hz);
        print_json(j);
    });
}

void setup_overlay(CLI::App& app) {
    auto* cmd = app.add_subcommand(
        "overlay", "Render a field or mask on top of an image");
    auto img_path = std::make_shared<std::string>();
    auto field_path = std::make_shared<std::string>();
    auto mask_path = std::make_shared<std::string>();
    auto out_path = std::make_shared<std::string>();
    auto stride = std::make_shared<int>(4);
    cmd->add_option("--in", *img_path, "Base image")->required();
    auto* fo = cmd->add_option("--field", *field_path, "Field to draw (.udf)");
    auto* mo = cmd->add_option("--mask", *mask_path, "Mask contour to draw");
    cmd->add_option("--out", *out_path, "Output image")->required();
    cmd->add_option("--stride", *stride, "Arrow grid spacing, px")
        ->capture_default_str();
    fo->excludes(mo);
    cmd->callback([=] {
        const sonoflow::Image img = sonoflow::load_image(*img_path);
        if (!field_path->empty()) {
            sonoflow::save_image(
                sonoflow::overlay_field(img, sonoflow::read_field(*field_path),
                                        *stride),
                *out_path);
        } else if (!mask_path->empty()) {
            sonoflow::save_image(
                sonoflow::overlay_mask(img, sonoflow::load_mask(*mask_path)),
                *out_path);
        } else {
            throw sonoflow::ValidationError(
                "overlay: either --field or --mask is required");
        }
    });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sonoflow: unsupervised deformable registration and "
                 "force-interpolated frame synthesis for ultrasound-like "
                 "images"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "sonoflow 0.1.0");

    setup_register(app);
    setup_warp(app);
    setup_eval(app);
    setup_synth(app);
    setup_phantom(app);
    setup_bench(app);
    setup_overlay(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const sonoflow::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const sonoflow::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const sonoflow::NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
