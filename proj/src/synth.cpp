#include "sonoflow/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>

#include "sonoflow/errors.hpp"

namespace sonoflow {

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

void validate_interpolation(const InterpolationSpec& spec) {
    if (!(spec.f_def > spec.f_ref))
        throw DomainError("interpolation: f_def must exceed f_ref");
    if (spec.f_new.empty())
        throw DomainError("interpolation: no target forces given");
    for (double f : spec.f_new)
        if (!(f >= spec.f_ref && f <= spec.f_def))
            throw DomainError("interpolation: target force "
                              + std::to_string(f)
                              + " outside [f_ref, f_def]");
}

DeformationField interpolate_field(const DeformationField& u_self,
                                   const DeformationField& u_dr,
                                   const InterpolationSpec& spec, double f_new) {
    if (u_self.width != u_dr.width || u_self.height != u_dr.height)
        throw ShapeError("interpolate_field: field dimensions differ");
    if (!(spec.f_def > spec.f_ref))
        throw DomainError("interpolation: f_def must exceed f_ref");
    if (!(f_new >= spec.f_ref && f_new <= spec.f_def))
        throw DomainError("interpolation: target force outside [f_ref, f_def]");
    const double t = (f_new - spec.f_ref) / (spec.f_def - spec.f_ref);
    // Return the anchors untouched at the endpoints so they stay bitwise
    // identical (a 0*x + 1*y blend can flip signed zeros).
    if (t == 0.0) return u_self;
    if (t == 1.0) return u_dr;
    return field_lincomb(1.0 - t, u_self, t, u_dr);
}

std::vector<SyntheticFrame> synthesize(const Image& reference,
                                       const BinaryMask* reference_mask,
                                       const DeformationField& u_self,
                                       const DeformationField& u_dr,
                                       const InterpolationSpec& spec) {
    validate_interpolation(spec);
    validate_image(reference, "reference image");
    if (u_dr.width != reference.width || u_dr.height != reference.height)
        throw ShapeError("synthesize: field dimensions differ from image");
    if (reference_mask && (reference_mask->width != reference.width
                           || reference_mask->height != reference.height))
        throw ShapeError("synthesize: mask dimensions differ from image");

    std::vector<SyntheticFrame> out;
    out.reserve(spec.f_new.size());
    for (double f : spec.f_new) {
        SyntheticFrame frame;
        frame.force_n = f;
        frame.field = interpolate_field(u_self, u_dr, spec, f);
        frame.image = warp_image(frame.field, reference);
        if (reference_mask)
            frame.mask = warp_mask(frame.field, *reference_mask);
        out.push_back(std::move(frame));
    }
    return out;
}

namespace {

struct PairJob {
    FrameRecord ref;
    FrameRecord def;
    int pair_index; // per-subject ordinal
};

struct PairResult {
    std::vector<FrameRecord> records;
    std::vector<std::string> warnings;
    bool failed = false;
    std::string error;
};

PairResult run_pair(const PairJob& job, const AugmentOptions& opt,
                    const std::filesystem::path& out_dir) {
    PairResult res;
    try {
        const Image ref = load_image(job.ref.path);
        const Image def = load_image(job.def.path);
        BinaryMask mask;
        const bool has_mask = !job.ref.mask_path.empty();
        if (has_mask) mask = load_mask(job.ref.mask_path);

        DeformationField u_self;
        if (opt.zero_self) {
            u_self.width = ref.width;
            u_self.height = ref.height;
            u_self.dx.assign(ref.data.size(), 0.0f);
            u_self.dy.assign(ref.data.size(), 0.0f);
        } else {
            u_self = self_register(ref, opt.solver).field;
        }
        const DeformationField u_dr =
            register_images(def, ref, opt.solver).field;

        const std::vector<SyntheticFrame> frames =
            synthesize(ref, has_mask ? &mask : nullptr, u_self, u_dr, opt.interp);

        for (const SyntheticFrame& frame : frames) {
            const std::string base = job.ref.subject + "_pair"
                                   + std::to_string(job.pair_index) + "_f"
                                   + force_tag(frame.force_n);
            save_image(frame.image, (out_dir / (base + ".png")).string());
            write_field(frame.field, (out_dir / (base + ".udf")).string());
            FrameRecord rec;
            rec.path = base + ".png";
            rec.force_n = frame.force_n;
            rec.subject = job.ref.subject;
            rec.mode = job.ref.mode;
            rec.synthetic = true;
            if (frame.mask) {
                rec.mask_path = base + "_mask.png";
                save_mask(*frame.mask, (out_dir / rec.mask_path).string());
            }
            res.records.push_back(std::move(rec));
        }
    } catch (const std::exception& e) {
        res.failed = true;
        res.error = e.what();
    }
    return res;
}

} // namespace

AugmentReport augment_dataset(const std::string& manifest_path,
                              const AugmentOptions& opt,
                              const std::string& out_dir) {
    validate_interpolation(opt.interp);
    validate_solver_config(opt.solver);
    if (opt.jobs < 1)
        throw DomainError("augment: jobs must be at least 1");

    const std::vector<FrameRecord> records = load_manifest(manifest_path);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw IoError("cannot create output directory '" + out_dir + "'");

    AugmentReport report;

    // Group real frames by subject, keeping manifest order within each group.
    std::vector<std::string> subject_order;
    std::map<std::string, std::vector<const FrameRecord*>> by_subject;
    int synthetic_inputs = 0;
    for (const FrameRecord& rec : records) {
        if (rec.synthetic) {
            ++synthetic_inputs;
            continue;
        }
        auto [it, inserted] = by_subject.try_emplace(rec.subject);
        if (inserted) subject_order.push_back(rec.subject);
        it->second.push_back(&rec);
    }
    if (synthetic_inputs > 0)
        report.warnings.push_back("ignored " + std::to_string(synthetic_inputs)
                                  + " synthetic input frame(s)");

    const double tol = 1e-9;
    std::vector<PairJob> jobs;
    for (const std::string& subject : subject_order) {
        std::vector<const FrameRecord*> refs, defs;
        for (const FrameRecord* rec : by_subject[subject]) {
            if (std::abs(rec->force_n - opt.interp.f_ref) <= tol)
                refs.push_back(rec);
            else if (std::abs(rec->force_n - opt.interp.f_def) <= tol)
                defs.push_back(rec);
        }
        const size_t pairs = std::min(refs.size(), defs.size());
        for (size_t k = 0; k < pairs; ++k)
            jobs.push_back({*refs[k], *defs[k], static_cast<int>(k)});
        const size_t leftover = refs.size() + defs.size() - 2 * pairs;
        if (leftover > 0) {
            report.unpaired_skipped += static_cast<int>(leftover);
            report.warnings.push_back("subject '" + subject + "': "
                                      + std::to_string(leftover)
                                      + " frame(s) without a partner");
        }
    }

    std::vector<PairResult> results(jobs.size());
    const int workers = std::min<int>(opt.jobs, static_cast<int>(jobs.size()));
    if (workers <= 1) {
        for (size_t i = 0; i < jobs.size(); ++i)
            results[i] = run_pair(jobs[i], opt, out_dir);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int t = 0; t < workers; ++t) {
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < jobs.size();
                     i = next.fetch_add(1))
                    results[i] = run_pair(jobs[i], opt, out_dir);
            });
        }
        for (std::thread& th : pool) th.join();
    }

    std::vector<FrameRecord> out_records;
    for (size_t i = 0; i < jobs.size(); ++i) {
        PairResult& res = results[i];
        for (const std::string& w : res.warnings) report.warnings.push_back(w);
        if (res.failed) {
            ++report.failures;
            report.warnings.push_back("pair " + std::to_string(i) + " ("
                                      + jobs[i].ref.subject + "): " + res.error);
            continue;
        }
        ++report.pairs_registered;
        report.frames_written += static_cast<int>(res.records.size());
        for (FrameRecord& rec : res.records)
            out_records.push_back(std::move(rec));
    }

    const std::string manifest_out =
        (std::filesystem::path(out_dir) / "manifest.jsonl").string();
    save_manifest(out_records, manifest_out);
    report.manifest_path = manifest_out;
    return report;
}

} // namespace sonoflow
