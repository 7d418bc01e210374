// Command-line front end for the day-ahead demand forecasting pipeline:
// ingest -> textfeat -> granger -> autoencode -> train -> predict ->
// evaluate -> ablate -> report, all driven by a flat key=value config file.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "loadcast/pipeline.hpp"
#include "loadcast/version.hpp"

namespace {

struct CliOptions {
    std::string config_path;
    std::string out_dir;
    std::string seed;
    std::string baseline;
    std::vector<std::string> variants;
    std::vector<std::string> inputs;
};

loadcast::RunConfig resolve_config(const CliOptions& opts) {
    loadcast::RunConfig cfg = loadcast::load_config(opts.config_path);
    if (!opts.out_dir.empty()) {
        cfg.out_dir = opts.out_dir;
        cfg.raw["out_dir"] = opts.out_dir;
    }
    if (!opts.seed.empty()) {
        auto kv = cfg.raw;
        kv["seed"] = opts.seed;
        cfg = loadcast::config_from_map(std::move(kv));
        if (!opts.out_dir.empty()) {
            cfg.out_dir = opts.out_dir;
            cfg.raw["out_dir"] = opts.out_dir;
        }
    }
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"loadcast: day-ahead electricity demand forecasting with textual features"};
    app.set_version_flag("--version", loadcast::kVersion);
    app.require_subcommand(1);

    CliOptions opts;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "config file (key=value lines)")
            ->required();
        sub->add_option("--out", opts.out_dir, "output directory (overrides out_dir)");
        sub->add_option("--seed", opts.seed, "seed override (u64)");
        return sub;
    };

    auto* synth = add_common(app.add_subcommand("synth", "generate a synthetic dataset"));
    auto* ingest = add_common(app.add_subcommand("ingest", "assemble and validate frame.csv"));
    auto* textfeat = add_common(
        app.add_subcommand("textfeat", "extract count/sentiment/wordfreq tables from a corpus"));
    auto* granger = add_common(
        app.add_subcommand("granger", "Granger-screen text features against demand"));
    auto* autoencode = add_common(
        app.add_subcommand("autoencode", "compress the embedding group to one channel"));
    auto* train = add_common(app.add_subcommand("train", "train the forecasting model"));
    auto* predict = add_common(app.add_subcommand("predict", "forecast the test windows"));
    auto* evaluate = add_common(
        app.add_subcommand("evaluate", "score a checkpoint on the test windows"));
    auto* ablate = add_common(
        app.add_subcommand("ablate", "train and compare feature-group variants"));
    ablate->add_option("--variants", opts.variants,
                       "comma list of variants, e.g. base,S,S-G,S-G-CG")
        ->required()
        ->delimiter(',');
    auto* report = add_common(
        app.add_subcommand("report", "comparison table from metrics.json files"));
    report->add_option("inputs", opts.inputs, "metrics.json paths")->required();
    report->add_option("--baseline", opts.baseline, "baseline model name (default: first)");

    CLI11_PARSE(app, argc, argv);

    try {
        const loadcast::RunConfig cfg = resolve_config(opts);
        if (synth->parsed()) {
            loadcast::cmd_synth(cfg);
        } else if (ingest->parsed()) {
            loadcast::cmd_ingest(cfg);
        } else if (textfeat->parsed()) {
            loadcast::cmd_textfeat(cfg);
        } else if (granger->parsed()) {
            loadcast::cmd_granger(cfg);
        } else if (autoencode->parsed()) {
            loadcast::cmd_autoencode(cfg);
        } else if (train->parsed()) {
            loadcast::cmd_train(cfg);
        } else if (predict->parsed()) {
            loadcast::cmd_predict(cfg);
        } else if (evaluate->parsed()) {
            loadcast::cmd_evaluate(cfg);
        } else if (ablate->parsed()) {
            loadcast::cmd_ablate(cfg, opts.variants);
        } else if (report->parsed()) {
            loadcast::cmd_report(cfg, opts.inputs, opts.baseline);
        }
    } catch (const loadcast::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const loadcast::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const loadcast::ModelError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return 3;
    } catch (const loadcast::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
