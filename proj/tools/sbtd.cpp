#include "sbtd/condition.hpp"
#include "sbtd/experiments.hpp"
#include "sbtd/io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

namespace {

using nlohmann::json;
using namespace sbtd;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitIllPosed = 2;
constexpr int kExitVerification = 3;

std::vector<Index> parse_index_list(const std::string& text) {
    std::vector<Index> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        size_t pos = 0;
        const long long v = std::stoll(item, &pos);
        if (pos != item.size() || v < 1) throw std::invalid_argument("bad integer list: " + text);
        out.push_back(static_cast<Index>(v));
    }
    if (out.empty()) throw std::invalid_argument("empty integer list");
    return out;
}

// Rank spec grammar: "l1,...,lD[xR]" groups joined by '+';
// e.g. "2,2,1x2" or "1,1,1x3+2,2,2x1".  All-ones groups become rank-1 terms.
std::vector<TermSpec> parse_rank_spec(const std::string& text) {
    std::vector<TermSpec> specs;
    std::stringstream ss(text);
    std::string group;
    while (std::getline(ss, group, '+')) {
        Index count = 1;
        std::string ranks_part = group;
        const size_t x = group.find('x');
        if (x != std::string::npos) {
            ranks_part = group.substr(0, x);
            count = static_cast<Index>(std::stoll(group.substr(x + 1)));
            if (count < 1) throw std::invalid_argument("bad term count in rank spec");
        }
        TermSpec spec;
        spec.ranks = parse_index_list(ranks_part);
        const bool all_ones =
            std::all_of(spec.ranks.begin(), spec.ranks.end(), [](Index l) { return l == 1; });
        spec.structure = all_ones ? CoreStructure::Rank1 : CoreStructure::FullRank;
        for (Index i = 0; i < count; ++i) specs.push_back(spec);
    }
    if (specs.empty()) throw std::invalid_argument("empty rank spec");
    return specs;
}

std::map<std::string, std::string> parse_params(const std::vector<std::string>& kvs) {
    std::map<std::string, std::string> out;
    for (const auto& kv : kvs) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--param expects key=value: " + kv);
        out[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return out;
}

double rel_diff(double a, double b) {
    if (std::isinf(a) && std::isinf(b)) return 0.0;
    if (std::isinf(a) || std::isinf(b)) return std::numeric_limits<double>::infinity();
    return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

int cmd_cond(const std::string& path, const std::string& method, double tol,
             const std::string& format, bool fail_on_illposed) {
    Sbtd s;
    try {
        s = load_decomposition(path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    const ValidationReport rep = validate(s);
    if (!rep.ok) {
        std::cerr << "error: invalid decomposition\n" << rep.describe();
        return kExitInput;
    }
    std::optional<ConditionReport> direct, compressed;
    if (method == "direct" || method == "both") direct = condition_direct(s, tol);
    if (method == "compressed" || method == "both") compressed = condition_compressed(s, tol);
    if (format == "json") {
        json out;
        if (direct) out["direct"] = report_to_json(*direct);
        if (compressed) out["compressed"] = report_to_json(*compressed);
        if (direct && compressed)
            out["kappa_rel_discrepancy"] = rel_diff(direct->kappa, compressed->kappa);
        std::cout << out.dump() << "\n";
    } else {
        if (direct) std::cout << format_report_text(*direct);
        if (compressed) std::cout << format_report_text(*compressed);
        if (direct && compressed)
            std::cout << "kappa_rel_discrepancy: " << format_double(rel_diff(direct->kappa, compressed->kappa))
                      << "\n";
    }
    const bool ill = (direct && direct->ill_posed) || (compressed && compressed->ill_posed);
    if (ill && fail_on_illposed) return kExitIllPosed;
    return kExitOk;
}

int cmd_gen(const std::string& model, std::uint64_t seed,
            const std::vector<std::string>& param_kvs, const std::string& out,
            const std::string& out_inflated) {
    const auto params = parse_params(param_kvs);
    auto get = [&](const std::string& key, const std::string& fallback) {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    };
    if (model == "illcond-btd") {
        IllCondParams p;
        p.divergence = std::stod(get("N", "10"));
        p.core_dims = parse_index_list(get("core_dims", "2,2,1"));
        p.block_dims = parse_index_list(get("block_dims", "4,4,2"));
        p.inflated_dims = parse_index_list(get("inflated_dims", "60,40,40"));
        p.seed = seed;
        const IllCondInstance inst = gen_illcond_btd(p);
        save_decomposition(out, inst.core);
        if (!out_inflated.empty()) save_decomposition(out_inflated, inst.inflated);
        return kExitOk;
    }
    std::vector<Index> dims;
    std::vector<TermSpec> specs;
    if (model == "random-cpd") {
        dims = parse_index_list(get("dims", "5,5,5"));
        const Index rank = static_cast<Index>(std::stoll(get("rank", "3")));
        if (rank < 1) throw std::invalid_argument("rank must be >= 1");
        TermSpec spec{CoreStructure::Rank1, std::vector<Index>(dims.size(), 1)};
        specs.assign(static_cast<size_t>(rank), spec);
    } else if (model == "random-btd") {
        dims = parse_index_list(get("dims", "4,4,2"));
        const Index terms = static_cast<Index>(std::stoll(get("terms", "2")));
        if (terms < 1) throw std::invalid_argument("terms must be >= 1");
        TermSpec spec{CoreStructure::FullRank, parse_index_list(get("ranks", "2,2,1"))};
        specs.assign(static_cast<size_t>(terms), spec);
    } else {
        throw std::invalid_argument("unknown model: " + model);
    }
    save_decomposition(out, gen_random_sbtd(dims, specs, seed));
    if (!out_inflated.empty()) throw std::invalid_argument("--out-inflated requires illcond-btd");
    return kExitOk;
}

// One random invariance trial: an SBTD over small core dimensions, its
// orthonormal inflation, and the three condition numbers under test.
struct TrialDraw {
    Sbtd core;
    Sbtd inflated;
};

Index tangent_dimension(const std::vector<TermSpec>& specs, const std::vector<Index>& dims) {
    Index total = 0;
    for (const auto& spec : specs) {
        Index core = 1, perp = 0;
        for (size_t d = 0; d < dims.size(); ++d) {
            core *= spec.ranks[d];
            perp += spec.ranks[d] * (dims[d] - spec.ranks[d]);
        }
        total += core + perp;
    }
    return total;
}

TrialDraw draw_mixed_instance(std::mt19937_64& rng, Index max_dim, Index max_product) {
    std::uniform_int_distribution<Index> kind_dist(0, 2);
    const Index kind = kind_dist(rng);
    std::vector<Index> core_dims(3);
    std::vector<TermSpec> specs;
    // redraw until generically well-posed: tangent dimension fits the ambient
    // space and full-rank blocks sit strictly inside every mode
    for (int attempt = 0; attempt < 200; ++attempt) {
        specs.clear();
        auto dim = [&rng](Index lo, Index hi) {
            return std::uniform_int_distribution<Index>(lo, hi)(rng);
        };
        if (kind == 0) {
            for (auto& d : core_dims) d = dim(2, 6);
            specs.assign(static_cast<size_t>(dim(1, 4)), TermSpec{CoreStructure::Rank1, {1, 1, 1}});
        } else if (kind == 1) {
            const bool fat = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
            const std::vector<Index> block = fat ? std::vector<Index>{2, 2, 2} : std::vector<Index>{2, 2, 1};
            for (size_t d = 0; d < 3; ++d) core_dims[d] = dim(block[d] + 1, 6);
            specs.assign(2, TermSpec{CoreStructure::FullRank, block});
        } else {
            core_dims = {dim(3, 6), dim(3, 6), dim(2, 6)};
            specs.push_back(TermSpec{CoreStructure::FullRank, {2, 2, 1}});
            specs.push_back(TermSpec{CoreStructure::Rank1, {1, 1, 1}});
        }
        Index ambient = 1;
        for (Index d : core_dims) ambient *= d;
        if (tangent_dimension(specs, core_dims) <= ambient) break;
    }
    TrialDraw draw;
    draw.core = gen_random_sbtd(core_dims, specs, rng());
    std::vector<Index> big(3);
    for (int attempt = 0;; ++attempt) {
        Index prod = 1;
        for (size_t d = 0; d < 3; ++d) {
            big[d] = std::uniform_int_distribution<Index>(core_dims[d], max_dim)(rng);
            prod *= big[d];
        }
        if (prod <= max_product || attempt > 200) break;
    }
    draw.inflated = inflate_sbtd(draw.core, big, rng());
    return draw;
}

int cmd_verify(Index trials, std::uint64_t seed, double max_kappa, double tol) {
    std::mt19937_64 rng(seed);
    Index passed = 0, skipped = 0;
    double worst_inflation = 0.0, worst_compression = 0.0;
    for (Index t = 0; t < trials; ++t) {
        const std::uint64_t trial_seed = rng();
        std::mt19937_64 trial_rng(trial_seed);
        const TrialDraw draw = draw_mixed_instance(trial_rng, 60, 30000);
        const ConditionReport core = condition_direct(draw.core);
        const ConditionReport direct = condition_direct(draw.inflated);
        const ConditionReport comp = condition_compressed(draw.inflated);
        if (core.ill_posed || core.kappa > max_kappa) {
            ++skipped;
            continue;
        }
        const double d_infl = rel_diff(core.kappa, direct.kappa);
        const double d_comp = rel_diff(direct.kappa, comp.kappa);
        worst_inflation = std::max(worst_inflation, d_infl);
        worst_compression = std::max(worst_compression, d_comp);
        if (d_infl > tol || d_comp > tol) {
            std::cerr << "violation at trial " << t << " (seed " << trial_seed
                      << "): kappa_core=" << format_double(core.kappa)
                      << " kappa_inflated=" << format_double(direct.kappa)
                      << " kappa_compressed=" << format_double(comp.kappa) << "\n";
            json summary{{"trials", trials}, {"passed", passed}, {"skipped", skipped},
                         {"failed_trial", t}, {"failed_seed", trial_seed}};
            std::cout << summary.dump() << "\n";
            return kExitVerification;
        }
        ++passed;
    }
    json summary{{"trials", trials},
                 {"passed", passed},
                 {"skipped", skipped},
                 {"max_rel_diff_inflation", worst_inflation},
                 {"max_rel_diff_compression", worst_compression}};
    std::cout << summary.dump() << "\n";
    return kExitOk;
}

int cmd_probe(const std::string& path, Index samples, std::uint64_t seed, bool singular_direction) {
    Sbtd s;
    try {
        s = load_decomposition(path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    const ValidationReport rep = validate(s);
    if (!rep.ok) {
        std::cerr << "error: invalid decomposition\n" << rep.describe();
        return kExitInput;
    }
    ProbeResult res;
    try {
        res = perturbation_probe(s, samples, seed);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIllPosed;
    }
    std::cout << probe_to_json(res).dump() << "\n";
    if (res.max_ratio > res.kappa_ref * (1.0 + 1e-8)) return kExitVerification;
    if (singular_direction &&
        std::abs(res.singular_ratio - res.kappa_ref) > 1e-10 * res.kappa_ref)
        return kExitVerification;
    return kExitOk;
}

int cmd_bench(const std::vector<std::string>& dims_list, const std::vector<std::string>& ranks_list,
              Index repeat, std::uint64_t seed) {
    if (dims_list.size() != ranks_list.size())
        throw std::invalid_argument("--dims and --ranks must be given the same number of times");
    if (repeat < 1) throw std::invalid_argument("--repeat must be >= 1");
    for (size_t cfg = 0; cfg < dims_list.size(); ++cfg) {
        const std::vector<Index> dims = parse_index_list(dims_list[cfg]);
        const std::vector<TermSpec> specs = parse_rank_spec(ranks_list[cfg]);
        const Sbtd s = gen_random_sbtd(dims, specs, seed + cfg);

        std::vector<double> t_direct, t_compressed;
        double kappa_direct = 0.0, kappa_compressed = 0.0;
        for (Index r = 0; r < repeat; ++r) {
            const ConditionReport d = condition_direct(s);
            const ConditionReport c = condition_compressed(s);
            t_direct.push_back(d.wall_time_s);
            t_compressed.push_back(c.wall_time_s);
            kappa_direct = d.kappa;
            kappa_compressed = c.kappa;
        }
        auto median = [](std::vector<double> v) {
            std::sort(v.begin(), v.end());
            return v[v.size() / 2];
        };
        const double td = median(t_direct), tc = median(t_compressed);

        Index n_max = *std::max_element(dims.begin(), dims.end());
        Index l_max = 1;
        for (const auto& spec : specs)
            l_max = std::max(l_max, *std::max_element(spec.ranks.begin(), spec.ranks.end()));
        const CostEstimate est = cost_model(n_max, static_cast<Index>(dims.size()),
                                            static_cast<Index>(specs.size()), l_max);
        json rec{{"dims", dims},
                 {"ranks", ranks_list[cfg]},
                 {"terms", specs.size()},
                 {"repeat", repeat},
                 {"t_direct_s", td},
                 {"t_compressed_s", tc},
                 {"speedup", td / tc},
                 {"predicted_direct_ops", est.direct_ops},
                 {"predicted_compressed_ops", est.compressed_ops},
                 {"predicted_ratio", est.direct_ops / est.compressed_ops},
                 {"kappa_direct", kappa_direct},
                 {"kappa_compressed", kappa_compressed}};
        std::cout << rec.dump() << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Condition numbers of additive structured tensor decompositions"};
    app.require_subcommand(1);

    auto* cond = app.add_subcommand("cond", "Condition number of a decomposition document");
    std::string cond_path, cond_method = "direct", cond_format = "text";
    double cond_tol = -1.0;
    bool cond_fail_illposed = false;
    cond->add_option("--decomp", cond_path, "decomposition JSON document")->required();
    cond->add_option("--method", cond_method)->check(CLI::IsMember({"direct", "compressed", "both"}));
    cond->add_option("--tol", cond_tol, "absolute ill-posedness threshold (default 1e-14*sigma_max)");
    cond->add_option("--format", cond_format)->check(CLI::IsMember({"json", "text"}));
    cond->add_flag("--fail-on-illposed", cond_fail_illposed);

    auto* gen = app.add_subcommand("gen", "Generate synthetic decomposition documents");
    std::string gen_model, gen_out, gen_out_inflated;
    std::uint64_t gen_seed = 0;
    std::vector<std::string> gen_params;
    gen->add_option("--model", gen_model)->required()
        ->check(CLI::IsMember({"illcond-btd", "random-cpd", "random-btd"}));
    gen->add_option("--seed", gen_seed);
    gen->add_option("--param", gen_params, "model parameter key=value (repeatable)");
    gen->add_option("--out", gen_out)->required();
    gen->add_option("--out-inflated", gen_out_inflated);

    auto* verify = app.add_subcommand("verify", "Invariance checks on random instances");
    Index verify_trials = 200;
    std::uint64_t verify_seed = 1;
    double verify_max_kappa = 1e8, verify_tol = 1e-8;
    verify->add_option("--trials", verify_trials);
    verify->add_option("--seed", verify_seed);
    verify->add_option("--max-kappa", verify_max_kappa, "skip instances above this kappa");
    verify->add_option("--tol", verify_tol, "relative agreement tolerance");

    auto* probe = app.add_subcommand("probe", "Monte-Carlo first-order perturbation probe");
    std::string probe_path;
    Index probe_samples = 1000;
    std::uint64_t probe_seed = 0;
    bool probe_singular = false;
    probe->add_option("--decomp", probe_path)->required();
    probe->add_option("--samples", probe_samples);
    probe->add_option("--seed", probe_seed);
    probe->add_flag("--singular-direction", probe_singular,
                    "also require the sigma_min direction to attain kappa");

    auto* bench = app.add_subcommand("bench", "Direct vs compressed timing");
    std::vector<std::string> bench_dims, bench_ranks;
    Index bench_repeat = 3;
    std::uint64_t bench_seed = 0;
    bench->add_option("--dims", bench_dims, "ambient dims, e.g. 60,40,40 (repeatable)")->required();
    bench->add_option("--ranks", bench_ranks, "rank spec, e.g. 2,2,1x2 (repeatable)")->required();
    bench->add_option("--repeat", bench_repeat);
    bench->add_option("--seed", bench_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitInput;
    }

    try {
        if (app.got_subcommand(cond))
            return cmd_cond(cond_path, cond_method, cond_tol, cond_format, cond_fail_illposed);
        if (app.got_subcommand(gen))
            return cmd_gen(gen_model, gen_seed, gen_params, gen_out, gen_out_inflated);
        if (app.got_subcommand(verify))
            return cmd_verify(verify_trials, verify_seed, verify_max_kappa, verify_tol);
        if (app.got_subcommand(probe))
            return cmd_probe(probe_path, probe_samples, probe_seed, probe_singular);
        if (app.got_subcommand(bench))
            return cmd_bench(bench_dims, bench_ranks, bench_repeat, bench_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}
