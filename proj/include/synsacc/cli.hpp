#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "synsacc/pipeline.hpp"

namespace synsacc::cli {

/// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric divergence.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDivergence = 4;

namespace detail {

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string out = "run";
};

inline void attach_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON run configuration");
    cmd->add_option("--seed", opts.seed, "override the config seed");
    cmd->add_option("--threads", opts.threads, "worker thread cap (0 = hardware)");
    cmd->add_option("--out", opts.out, "output directory");
}

inline cfg::RunConfig resolve(const CommonOpts& opts) {
    cfg::RunConfig config = opts.config_path.empty()
                                ? cfg::RunConfig{}
                                : cfg::load_config(opts.config_path);
    if (opts.seed) config.seed = *opts.seed;
    if (opts.threads) config.threads = *opts.threads;
    config.sim.seed = config.seed;
    config.train.core.seed = config.seed;
    config.train.core.threads = config.threads;
    config.validate();
    return config;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args) {
    CLI::App app{"synsacc: synthetic saccade/fixation event streams and "
                 "spiking-network training"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    detail::CommonOpts gen_opts, sim_opts, train_opts, eval_opts, ft_opts,
        sweep_opts, ops_opts;
    std::string sim_frames, train_manifest, eval_ckpt, eval_manifest, ft_ckpt,
        ft_manifest, sweep_dataset, ops_ckpt, ops_manifest;
    double ft_fraction = -1.0;
    bool gen_csv = false, sim_csv = false;

    CLI::App* gen = app.add_subcommand(
        "gen", "generate a labeled synthetic event dataset");
    detail::attach_common(gen, gen_opts);
    gen->add_flag("--csv", gen_csv, "also export events as CSV");

    CLI::App* simulate = app.add_subcommand(
        "simulate", "convert a directory of PGM frames into an event file");
    detail::attach_common(simulate, sim_opts);
    simulate->add_option("frames_dir", sim_frames, "directory of P5 .pgm frames")
        ->required();
    simulate->add_flag("--csv", sim_csv, "also export events as CSV");

    CLI::App* train_cmd =
        app.add_subcommand("train", "train a spiking network on a dataset");
    detail::attach_common(train_cmd, train_opts);
    train_cmd->add_option("manifest", train_manifest, "dataset manifest.json")
        ->required();

    CLI::App* eval_cmd =
        app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    detail::attach_common(eval_cmd, eval_opts);
    eval_cmd->add_option("checkpoint", eval_ckpt, "model checkpoint")->required();
    eval_cmd->add_option("manifest", eval_manifest, "dataset manifest.json")
        ->required();

    CLI::App* finetune_cmd = app.add_subcommand(
        "finetune", "finetune a checkpoint on a fraction of a dataset");
    detail::attach_common(finetune_cmd, ft_opts);
    finetune_cmd->add_option("checkpoint", ft_ckpt, "pretrained checkpoint")
        ->required();
    finetune_cmd->add_option("manifest", ft_manifest, "dataset manifest.json")
        ->required();
    finetune_cmd->add_option("--fraction", ft_fraction,
                             "train-split fraction (overrides config)");

    CLI::App* sweep_cmd = app.add_subcommand(
        "sweep", "train and evaluate across temporal window lengths");
    detail::attach_common(sweep_cmd, sweep_opts);
    sweep_cmd
        ->add_option("dataset_dir", sweep_dataset,
                     "directory with events_NNN.evb1 + labels_NNN.json")
        ->required();

    CLI::App* ops_cmd = app.add_subcommand(
        "ops", "synaptic-operation accounting for a checkpoint");
    detail::attach_common(ops_cmd, ops_opts);
    ops_cmd->add_option("checkpoint", ops_ckpt, "model checkpoint")->required();
    ops_cmd->add_option("manifest", ops_manifest, "dataset manifest.json")
        ->required();

    std::vector<std::string> mutable_args(args.rbegin(), args.rend());
    try {
        app.parse(mutable_args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*gen) {
            const auto config = detail::resolve(gen_opts);
            const auto result = pipeline::cmd_gen(config, gen_opts.out, gen_csv);
            std::printf("dataset: %zu fixation / %zu saccade windows "
                        "(%zu train, %zu test), %llu events\n",
                        result.fixation_windows, result.saccade_windows,
                        result.train_windows, result.test_windows,
                        static_cast<unsigned long long>(result.total_events));
            std::printf("manifest: %s\n", result.manifest_path.c_str());
        } else if (*simulate) {
            const auto config = detail::resolve(sim_opts);
            std::filesystem::create_directories(sim_opts.out);
            const std::string out_file =
                (std::filesystem::path(sim_opts.out) / "events.evb1").string();
            const auto stream =
                pipeline::cmd_simulate(config, sim_frames, out_file, sim_csv);
            cfg::write_config(
                (std::filesystem::path(sim_opts.out) / "config.json").string(),
                config, "simulate");
            std::printf("%zu events -> %s\n", stream.events.size(), out_file.c_str());
        } else if (*train_cmd) {
            const auto config = detail::resolve(train_opts);
            const auto result =
                pipeline::cmd_train(config, train_manifest, train_opts.out);
            std::printf("trained %zu epochs; best eval accuracy %.4f\n",
                        result.history.loss.size(), result.best_eval_accuracy);
            std::printf("checkpoints: %s, %s\n", result.final_checkpoint.c_str(),
                        result.best_checkpoint.c_str());
        } else if (*eval_cmd) {
            const auto config = detail::resolve(eval_opts);
            const auto run =
                pipeline::cmd_eval(config, eval_ckpt, eval_manifest, eval_opts.out);
            std::printf("accuracy %.4f precision %.4f recall %.4f f1 %.4f "
                        "loss %.5f\n",
                        run.result.binary.accuracy, run.result.binary.precision,
                        run.result.binary.recall, run.result.binary.f1,
                        run.mean_loss);
        } else if (*finetune_cmd) {
            auto config = detail::resolve(ft_opts);
            if (ft_fraction > 0.0) config.finetune.fraction = ft_fraction;
            config.validate();
            const auto result =
                pipeline::cmd_finetune(config, ft_ckpt, ft_manifest, ft_opts.out);
            std::printf("finetuned %zu epochs; best eval accuracy %.4f\n",
                        result.history.loss.size(), result.best_eval_accuracy);
        } else if (*sweep_cmd) {
            const auto config = detail::resolve(sweep_opts);
            const auto rows =
                pipeline::cmd_sweep(config, sweep_dataset, sweep_opts.out);
            for (const auto& r : rows)
                std::printf("ts %6.4g ms: accuracy %.4f loss %.5f f1 %.4f\n",
                            r.ts_ms, r.accuracy, r.loss, r.f1);
        } else if (*ops_cmd) {
            const auto config = detail::resolve(ops_opts);
            const auto result =
                pipeline::cmd_ops(config, ops_ckpt, ops_manifest, ops_opts.out);
            for (const auto& row : result.ops.rows)
                std::printf("%s: events %.2f synops %.2f acts %llu macs %llu\n",
                            row.name.c_str(), row.mean_events, row.synaptic_ops,
                            static_cast<unsigned long long>(row.ann_activations),
                            static_cast<unsigned long long>(row.ann_macs));
            std::printf("total: synops %.2f macs %llu\n",
                        result.ops.total_synaptic_ops,
                        static_cast<unsigned long long>(result.ops.total_macs));
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return kExitDivergence;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return kExitOk;
}

}  // namespace synsacc::cli
