// Command-line front end for the synthetic face-verification fairness audit
// pipeline. Subcommands: generate | balance | train | audit | attribute |
// transfer | report. Exit codes: 0 ok, 1 validation error, 2 runtime error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "synfair/synfair.hpp"

namespace fs = std::filesystem;
using namespace synfair;

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
};

pipeline::RunConfig resolve_config(const CommonArgs& args) {
    pipeline::RunConfig cfg;
    if (!args.config_path.empty()) cfg = pipeline::load_config(args.config_path);
    if (args.seed) {
        cfg.seed = *args.seed;
        cfg.seed_set = true;
    }
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", args.seed, "master seed (overrides the config's seed)");
    cmd->add_option("--out", args.out_dir, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic face-verification fairness audit pipeline"};
    app.require_subcommand(1);

    CommonArgs gen_args, bal_args, train_args, audit_args, attr_args, transfer_args, report_args;
    std::string cohort_dir, params_dir, params_file, table_csv, bundle_a, bundle_b, bundle_path;

    auto* gen = app.add_subcommand("generate", "render an attribute-controlled synthetic cohort");
    add_common(gen, gen_args);

    auto* bal = app.add_subcommand("balance", "optimize demographic balancing weights for a feature table");
    add_common(bal, bal_args);
    bal->add_option("--table", table_csv, "feature table CSV (f0..fN,group)")->required()->check(CLI::ExistingFile);

    auto* tr = app.add_subcommand("train", "train one encoder per margin variant");
    add_common(tr, train_args);
    tr->add_option("--cohort", cohort_dir, "cohort directory from `generate`")->required()->check(CLI::ExistingDirectory);

    auto* au = app.add_subcommand("audit", "run the verification benchmark and fairness metrics");
    add_common(au, audit_args);
    au->add_option("--cohort", cohort_dir, "cohort directory")->required()->check(CLI::ExistingDirectory);
    au->add_option("--params", params_dir, "directory with params_<variant>.bin files")
        ->required()
        ->check(CLI::ExistingDirectory);

    auto* at = app.add_subcommand("attribute", "ceteris-paribus bias attribution for one trained model");
    add_common(at, attr_args);
    at->add_option("--cohort", cohort_dir, "cohort directory")->required()->check(CLI::ExistingDirectory);
    at->add_option("--model", params_file, "params_<variant>.bin file")->required()->check(CLI::ExistingFile);

    auto* tf = app.add_subcommand("transfer", "correlate disparity patterns of two audit bundles");
    add_common(tf, transfer_args);
    tf->add_option("--bundle-a", bundle_a, "first bundle.json")->required()->check(CLI::ExistingFile);
    tf->add_option("--bundle-b", bundle_b, "second bundle.json")->required()->check(CLI::ExistingFile);

    auto* rp = app.add_subcommand("report", "print a human-readable summary of a bundle");
    add_common(rp, report_args);
    rp->add_option("--bundle", bundle_path, "bundle.json")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto dir = pipeline::cmd_generate(resolve_config(gen_args), gen_args.out_dir);
            std::cout << "cohort written to " << dir.string() << "\n";
        } else if (bal->parsed()) {
            const auto rep = pipeline::cmd_balance(resolve_config(bal_args), table_csv, bal_args.out_dir);
            std::printf("balance loss %.6g -> %.6g; max group-mean deviation %.6g -> %.6g; KS min p %.4f\n",
                        rep.loss_before, rep.loss_after, rep.max_mean_dev_before, rep.max_mean_dev_after, rep.ks_min_p);
        } else if (tr->parsed()) {
            const auto files = pipeline::cmd_train(resolve_config(train_args), cohort_dir, train_args.out_dir);
            for (const auto& f : files) std::cout << "trained " << f.string() << "\n";
        } else if (au->parsed()) {
            const auto bundle = pipeline::cmd_audit(resolve_config(audit_args), cohort_dir, params_dir, audit_args.out_dir);
            std::cout << "audit bundle " << bundle.config_hash << " written to " << audit_args.out_dir << "\n";
        } else if (at->parsed()) {
            const auto w = pipeline::cmd_attribute(resolve_config(attr_args), cohort_dir, params_file, attr_args.out_dir);
            std::printf("attribution shares: light=%.4f pose=%.4f expression=%.4f (residual %.4g)\n", w.share_light,
                        w.share_pose, w.share_exp, w.residual_norm);
        } else if (tf->parsed()) {
            const std::uint64_t seed = transfer_args.seed.value_or(1);
            const auto rep = pipeline::cmd_transfer(bundle_a, bundle_b, transfer_args.out_dir, seed);
            std::printf("overall r=%.4f (95%% CI [%.4f, %.4f]), mean abs gap %.4f%%\n", rep.overall_r, rep.ci_lo,
                        rep.ci_hi, rep.overall_gap_percent);
        } else if (rp->parsed()) {
            std::cout << pipeline::cmd_report(bundle_path);
        }
    } catch (const RangeError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const ParamError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const ShapeError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const LookupError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const ProtocolError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
