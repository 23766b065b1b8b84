#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <unistd.h>

#include "fsr/augmenter.hpp"
#include "fsr/checkpoint.hpp"
#include "fsr/evaluator.hpp"
#include "fsr/grad_suite.hpp"
#include "fsr/refiner.hpp"
#include "fsr/tns_io.hpp"
#include "fsr/trainer.hpp"

using namespace fsr;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor uniform(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = d(rng);
    return Tensor(shape, std::move(v));
}

fs::path scratch_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("fsr_acceptance_" + std::to_string(::getpid()) + "_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::size_t checks = 0;
    std::string failed;
    for (std::uint64_t seed = 0; seed < 10; ++seed)
        for (const auto& e : run_grad_suite(seed)) {
            ++checks;
            worst = std::max(worst, e.report.max_rel_err);
            if (!e.report.pass && failed.empty()) failed = e.name + " (seed " + std::to_string(seed) + ")";
        }
    const double secs = seconds_since(t0);
    std::ostringstream os;
    os << checks << " checks over 10 seeds, max_rel_err=" << std::scientific << std::setprecision(2) << worst
       << std::fixed << ", " << secs << "s";
    if (!failed.empty()) os << ", first failure " << failed;
    return {failed.empty() && worst <= kGradTolerance && secs < 120.0, os.str()};
}

std::vector<PairAssignment> exhaustive_pairs(const Tensor& s, const std::vector<int>& labels) {
    const std::size_t n = labels.size();
    std::vector<PairAssignment> out(n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t j = 0; j < n; ++j) {
            if (j == a) continue;
            const double v = s.at({a, j});
            PairAssignment& p = out[a];
            if (labels[j] == labels[a]) {
                if (p.inner_hard == kAbsent || v < s.at({a, p.inner_hard})) p.inner_hard = j;
                if (p.inner_easy == kAbsent || v > s.at({a, p.inner_easy})) p.inner_easy = j;
            } else {
                if (p.inter_hard == kAbsent || v > s.at({a, p.inter_hard})) p.inter_hard = j;
                if (p.inter_easy == kAbsent || v < s.at({a, p.inter_easy})) p.inter_easy = j;
            }
        }
    return out;
}

Outcome pair_search_oracle() {
    const auto t0 = Clock::now();
    std::size_t mismatches = 0, anchors = 0;
    for (std::uint64_t b = 0; b < 200; ++b) {
        Rng rng = keyed_rng({b, 0x5ea4c4});
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 64)(rng);
        const int k = std::uniform_int_distribution<int>(1, 8)(rng);
        std::vector<int> labels(n);
        for (auto& l : labels) l = std::uniform_int_distribution<int>(0, k - 1)(rng);
        Tensor e = uniform({n, 8}, rng);
        if (b % 4 == 0)  // coarse values force ties
            for (auto& v : e.mutable_data()) v = std::round(v * 2.0) / 2.0;
        Tensor s = similarity_matrix(l2_normalize(e, 1));
        auto got = search_pairs(s, labels);
        auto want = exhaustive_pairs(s, labels);
        for (std::size_t a = 0; a < n; ++a, ++anchors)
            if (got[a].inner_hard != want[a].inner_hard || got[a].inner_easy != want[a].inner_easy ||
                got[a].inter_hard != want[a].inter_hard || got[a].inter_easy != want[a].inter_easy)
                ++mismatches;
    }
    std::ostringstream os;
    os << "200 batches, " << anchors << " anchors, " << mismatches << " mismatches, " << std::fixed
       << std::setprecision(2) << seconds_since(t0) << "s";
    return {mismatches == 0, os.str()};
}

Outcome closed_form_losses() {
    bool ok = true;
    std::ostringstream os;
    auto near = [&](const char* what, double got, double want) {
        if (std::abs(got - want) > 1e-9) {
            ok = false;
            os << what << "=" << std::setprecision(12) << got << " (want " << want << ") ";
        }
    };
    near("d_bm1", benchmark_distance(-0.5, 0.95), -1.45);
    near("d_bm2", benchmark_distance(0.0, 0.8), -0.8);
    near("psi1", dynamic_intensity(0.2, 0.9, -1.45, 1.0), -0.97875);
    near("psi2", dynamic_intensity(0.1, 0.9, -0.8, 1.0), -0.56);
    auto hinge = [](double s_inner, double s_inter, double psi) {
        Tensor s = Tensor::mat({{1, s_inner, s_inter}, {s_inner, 1, 0}, {s_inter, 0, 1}});
        PairAssignment p;
        p.inner_hard = p.inner_easy = 1;
        p.inter_hard = p.inter_easy = 2;
        return adaptive_loss(s, {p, {}, {}}, {psi, std::nullopt, std::nullopt}).item();
    };
    near("l_ada1", hinge(0.2, 0.9, -0.97875), 0.0);
    near("l_ada2", hinge(0.1, 0.9, -0.56), 0.24);

    std::size_t fuzzed = 0;
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        Rng rng = keyed_rng({seed, 0xc105ed});
        const std::size_t n = std::uniform_int_distribution<std::size_t>(3, 32)(rng);
        std::vector<int> labels(n);
        for (auto& l : labels) l = std::uniform_int_distribution<int>(0, 3)(rng);
        Tensor s = similarity_matrix(l2_normalize(uniform({n, 6}, rng), 1));
        auto pairs = search_pairs(s, labels);
        auto d = benchmark_distance(pairs);
        auto psi0 = dynamic_intensity(pairs, d, 0.0);
        auto psi1 = dynamic_intensity(pairs, d, std::uniform_real_distribution<double>(0.0, 3.0)(rng));
        for (std::size_t a = 0; a < n; ++a) {
            if (!pairs[a].complete()) continue;
            ++fuzzed;
            if (*psi0[a] != *d[a]) ok = false, os << "psi(rho=0)!=d_bm ";
            const double base = intensity_base(pairs[a].s_inner_hard, pairs[a].s_inter_hard);
            if (!(base >= 0.0 && base <= 1.0)) ok = false, os << "base out of range ";
        }
        if (adaptive_loss(s, pairs, psi1).item() < 0.0) ok = false, os << "negative L_ada ";
    }
    os << "walkthrough values to 1e-9; " << fuzzed << " fuzzed anchors (psi(rho=0)=d_bm exact, base in [0,1], L_ada>=0)";
    return {ok, os.str()};
}

Outcome refiner_invariants() {
    const std::size_t c = 64;
    Refiner refiner(c);
    std::size_t batches = 0, distinct = 0, bound_violations = 0, mask_violations = 0;
    double worst_sum = 0.0;
    auto inspect = [&](const Tensor& f, const RefinerOutput& out) {
        const std::size_t n = f.dim(0);
        for (std::size_t i = 0; i < n; ++i) {
            double total = 0;
            for (std::size_t j = 0; j < c; ++j) total += out.kernels.at({i, j});
            worst_sum = std::max(worst_sum, std::abs(total - 1.0));
        }
        for (double m : out.mask.data()) mask_violations += !(m > 0.0 && m < 1.0);
        for (std::size_t i = 0; i < f.numel(); ++i) bound_violations += std::abs(out.refined[i]) > std::abs(f[i]);
    };
    for (std::uint64_t b = 0; b < 100; ++b) {
        Rng rng = keyed_rng({b, 0x4ef1});
        ParamStore params;
        refiner.init(params, rng);
        Tensor f = uniform({4, c, 4, 4}, rng);
        RefinerOutput out = refiner.refine(f, params, b % 2 ? Mode::train : Mode::eval);
        inspect(f, out);
        ++batches;
        bool all_differ = true;
        for (std::size_t i = 0; i < 4 && all_differ; ++i)
            for (std::size_t j = i + 1; j < 4 && all_differ; ++j) {
                bool same = true;
                for (std::size_t k = 0; k < c; ++k) same = same && out.kernels.at({i, k}) == out.kernels.at({j, k});
                all_differ = !same;
            }
        distinct += all_differ;
    }
    // Real extractor activations.
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Model model({4, 32, true}, seed);
        Rng rng = keyed_rng({seed, 0x4ef2});
        Tensor images = uniform({8, 1, 32, 32}, rng, 0.0, 1.0);
        NoGradGuard g;
        Tensor maps = model.extractor().feature_maps(images, model.params(), Mode::eval);
        inspect(maps, model.refiner()->refine(maps, model.params(), Mode::eval));
    }
    const double share = static_cast<double>(distinct) / static_cast<double>(batches);
    std::ostringstream os;
    os << "max |row sum - 1|=" << std::scientific << std::setprecision(2) << worst_sum << std::fixed
       << ", mask violations=" << mask_violations << ", |GL|>|f| violations=" << bound_violations
       << ", distinct per-sample kernels on " << std::setprecision(0) << share * 100 << "% of batches";
    return {worst_sum <= 1e-9 && mask_violations == 0 && bound_violations == 0 && share >= 0.95, os.str()};
}

TrainConfig desk_config() {
    TrainConfig cfg;
    cfg.epochs = 60;
    return cfg;
}

Outcome ablation(const DatasetIndex& data, const fs::path& work) {
    const auto t0 = Clock::now();
    const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    AblationOptions opt{work / "ablation", work / "ablation" / "ablation.csv", 1, &std::cerr};
    auto rows = run_ablation(data, desk_config(), seeds, opt);
    std::map<std::string, double> mean;
    for (const auto& s : summarize_ablation(rows)) mean[s.config] = s.mean_accuracy;
    const double secs = seconds_since(t0);
    const double gap = (mean["full"] - mean["V0"]) * 100.0;
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    for (const auto& c : ablation_configs()) os << c.name << "=" << mean[c.name] * 100.0 << "% ";
    os << "| full-V0=" << gap << "pp, V1-V0=" << (mean["V1"] - mean["V0"]) * 100.0 << "pp, " << std::setprecision(0)
       << secs << "s";
    const bool ok = mean["full"] > mean["V0"] && gap >= 2.0 && mean["V1"] >= mean["V0"] && secs <= 1800.0;
    return {ok, os.str()};
}

Outcome metric_formulas() {
    bool ok = true;
    ConfusionMatrix cm = confusion({0, 1, 1, 0}, {0, 1, 0, 0}, 2);
    MetricsReport r = metrics(cm);
    const double want[] = {2.0 / 3.0, 1.0, 1.0, 0.5, 0.8, 2.0 / 3.0, 0.75};
    const double got[] = {r.recall[0], r.recall[1], r.precision[0], r.precision[1], r.f1[0], r.f1[1], r.accuracy};
    for (int i = 0; i < 7; ++i) ok = ok && std::abs(got[i] - want[i]) <= 1e-12;
    ok = ok && cm.counts == std::vector<std::uint64_t>{2, 1, 0, 1};
    std::size_t fuzzed = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        Rng rng = keyed_rng({seed, 0x3e7});
        const std::size_t k = std::uniform_int_distribution<std::size_t>(2, 10)(rng);
        ConfusionMatrix m(k);
        for (auto& v : m.counts) v = std::uniform_int_distribution<std::uint64_t>(0, 20)(rng);
        if (m.total() == 0) continue;
        std::vector<std::size_t> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        ConfusionMatrix p(k);
        for (std::size_t t = 0; t < k; ++t)
            for (std::size_t q = 0; q < k; ++q) p.at(perm[t], perm[q]) = m.at(t, q);
        MetricsReport a = metrics(m), b = metrics(p);
        ok = ok && std::abs(a.macro_recall - b.macro_recall) <= 1e-12 &&
             std::abs(a.macro_precision - b.macro_precision) <= 1e-12 && std::abs(a.macro_f1 - b.macro_f1) <= 1e-12 &&
             std::abs(a.accuracy - b.accuracy) <= 1e-12;
        ++fuzzed;
    }
    return {ok, "worked example exact to 1e-12; permutation invariance on " + std::to_string(fuzzed) + " fuzzed matrices"};
}

Outcome determinism(const DatasetIndex& data, const fs::path& work) {
    const TrainConfig cfg = desk_config();
    FitResult a = fit(data, cfg, work / "det_a");
    FitResult b = fit(data, cfg, work / "det_b");
    const std::string ca = read_text(work / "det_a" / "metrics.csv"), cb = read_text(work / "det_b" / "metrics.csv");
    Checkpoint ck = load_checkpoint(work / "det_a" / "checkpoint");
    Model restored = restore_model(ck);
    LoadedSplit test = load_split(data, Split::test, ck.model.image_size);
    const double acc = metrics(confusion(restored.predict(test.images), test.labels, data.classes.size())).accuracy;
    std::ostringstream os;
    os << "metrics CSVs " << (ca == cb && !ca.empty() ? "bit-identical" : "DIFFER") << " (" << a.history.size()
       << " epochs); checkpoint accuracy " << std::setprecision(17) << acc << " vs trained " << a.final_accuracy;
    return {ca == cb && !ca.empty() && acc == a.final_accuracy && a.final_accuracy == b.final_accuracy, os.str()};
}

Outcome format_fidelity() {
    std::size_t mismatches = 0;
    for (std::uint64_t i = 0; i < 1000; ++i) {
        Rng rng = keyed_rng({i, 0x7e5});
        const std::size_t rank = std::uniform_int_distribution<std::size_t>(0, 4)(rng);
        Shape shape(rank);
        for (auto& d : shape) d = std::uniform_int_distribution<std::size_t>(1, rank > 2 ? 6 : 40)(rng);
        std::vector<double> v(shape_numel(shape));
        std::uniform_int_distribution<std::uint32_t> bits;
        for (auto& x : v) {
            float f;
            do {
                const std::uint32_t u = bits(rng);
                std::memcpy(&f, &u, 4);
            } while (std::isnan(f));
            x = f;  // any non-NaN float32 bit pattern: denormals, ±0, ±inf included
        }
        Tensor t(shape, v);
        auto bytes = tns_encode(t);
        Tensor back = tns_decode(bytes);
        bool same = back.shape() == shape && tns_encode(back) == bytes;
        for (std::size_t k = 0; same && k < v.size(); ++k) {
            const float x = static_cast<float>(v[k]), y = static_cast<float>(back[k]);
            same = std::memcmp(&x, &y, 4) == 0;
        }
        mismatches += !same;
    }
    auto kind_of = [](std::vector<std::uint8_t> bytes) -> int {
        try {
            tns_decode(bytes);
        } catch (const TnsError& e) {
            return static_cast<int>(e.kind());
        }
        return -1;
    };
    auto good = tns_encode(Tensor::vec({1, 2, 3}));
    auto magic = good;
    magic[0] = 'X';
    auto huge = std::vector<std::uint8_t>{'T', 'N', 'S', '1', 2, 0, 0, 1, 0, 0, 0, 1, 0};  // 2^16 × 2^16
    huge.resize(100, 0);
    auto trailing = good;
    trailing.push_back(7);
    auto rank5 = std::vector<std::uint8_t>{'T', 'N', 'S', '1', 5};
    const int k_magic = kind_of(magic), k_trunc = kind_of(huge), k_trail = kind_of(trailing), k_rank = kind_of(rank5);
    const bool distinct = k_magic == static_cast<int>(TnsError::Kind::bad_magic) &&
                          k_trunc == static_cast<int>(TnsError::Kind::truncated) &&
                          k_trail == static_cast<int>(TnsError::Kind::bad_header) &&
                          k_rank == static_cast<int>(TnsError::Kind::bad_header);
    std::ostringstream os;
    os << "1000 fuzzed tensors, " << mismatches << " round-trip mismatches; malformed headers -> "
       << (distinct ? "bad_magic / truncated / bad_header as specified" : "WRONG error kinds");
    return {mismatches == 0 && distinct, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
    // --skip-training leaves criteria 5 and 7 out (for quick local runs).
    const bool skip_training = argc > 1 && std::string(argv[1]) == "--skip-training";
    const fs::path work = scratch_dir("work");
    DatasetIndex data;
    if (!skip_training) data = generate_synthetic(SyntheticSpec{}, work / "data");

    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
        bool needs_training;
    };
    const std::vector<Criterion> criteria{
        {"gradient suite", gradient_suite, false},
        {"pair-search oracle", pair_search_oracle, false},
        {"closed-form loss checks", closed_form_losses, false},
        {"refiner invariants", refiner_invariants, false},
        {"scaled ablation", [&] { return ablation(data, work); }, true},
        {"metric formulas", metric_formulas, false},
        {"determinism and checkpoint", [&] { return determinism(data, work); }, true},
        {"format fidelity", format_fidelity, false},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (skip_training && criteria[i].needs_training) {
            std::cout << "SKIP " << i + 1 << " " << criteria[i].name << std::endl;
            continue;
        }
        Outcome o;
        try {
            o = criteria[i].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << i + 1 << " " << criteria[i].name << ": " << o.detail << std::endl;
    }
    std::error_code ec;
    fs::remove_all(work, ec);
    return failures == 0 ? 0 : 1;
}
