#include "snnconv/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "snnconv/checksum.hpp"
#include "snnconv/config.hpp"
#include "snnconv/container.hpp"
#include "snnconv/convert.hpp"
#include "snnconv/event_io.hpp"
#include "snnconv/network_io.hpp"

namespace snn {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Failure {
    int code;
    std::string message;
};

template <typename Fn>
auto guarded(int code, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Failure&) {
        throw;
    } catch (const Error& e) {
        throw Failure{code, e.what()};
    } catch (const std::bad_alloc&) {
        throw Failure{code, "out of memory"};
    }
}

struct Options {
    std::string command;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> rates;
    std::optional<std::size_t> subset;
    std::optional<unsigned> threads;
    std::vector<std::string> settings;
    std::string network_path;
    std::string spiking_path;
    std::optional<std::size_t> index;
    std::string range;
};

struct Manifest {
    nlohmann::json inputs = nlohmann::json::object();
    nlohmann::json stages = nlohmann::json::object();
    nlohmann::json metrics = nlohmann::json::object();

    template <typename Fn>
    auto timed(const std::string& name, Fn&& fn) -> decltype(fn()) {
        const auto start = Clock::now();
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            stages[name] = std::chrono::duration<double>(Clock::now() - start).count();
        } else {
            auto result = fn();
            stages[name] = std::chrono::duration<double>(Clock::now() - start).count();
            return result;
        }
    }

    void input(const std::string& role, const fs::path& path) {
        inputs[role] = {{"path", path.string()}, {"sha256", sha256_file(path)}};
    }
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config_path, "key = value config file");
    cmd->add_option("--seed", o.seed, "seed for training and simulation");
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--threads", o.threads, "worker threads");
    cmd->add_option("--set", o.settings, "extra key=value override (repeatable)");
}

RunConfig build_config(const Options& o) {
    RunConfig cfg;
    if (!o.config_path.empty()) {
        if (!fs::exists(o.config_path)) throw Failure{kExitUsage, "config file not found: " + o.config_path};
        cfg = guarded(kExitUsage, [&] { return load_run_config(o.config_path); });
    }
    guarded(kExitUsage, [&] {
        for (const auto& s : o.settings) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw Error(ErrorKind::InvalidArgument, "--set expects key=value, got " + s);
            auto trim = [](std::string x) {
                x.erase(0, x.find_first_not_of(' '));
                x.erase(x.find_last_not_of(' ') + 1);
                return x;
            };
            apply_setting(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
        }
        if (const char* env = std::getenv("SNNCONV_OUT"); env && *env) cfg.out_dir = env;
        if (o.out_dir) cfg.out_dir = fs::absolute(*o.out_dir);
        if (o.seed) cfg.train.seed = cfg.sim.seed = *o.seed;
        if (o.threads) cfg.threads = *o.threads;
        if (o.rates) cfg.rates = parse_rate_list(*o.rates);
        if (o.subset) {
            if (*o.subset == 0) throw Error(ErrorKind::InvalidArgument, "--subset must be positive");
            if (o.command == "train") cfg.train_subset = *o.subset;
            else if (o.command == "convert") cfg.conversion.calibration_sample_count = *o.subset;
            else cfg.eval_subset = *o.subset;
        }
        if (cfg.threads == 0) cfg.threads = 1;
        validate(cfg);
    });
    return cfg;
}

fs::path out_path(const RunConfig& cfg) { return cfg.resolve(cfg.out_dir); }

LabeledDataset load_split(const RunConfig& cfg, bool training, Manifest& m) {
    const auto images = cfg.data_path(training ? cfg.train_images : cfg.test_images);
    const auto labels = cfg.data_path(training ? cfg.train_labels : cfg.test_labels);
    for (const auto& p : {images, labels})
        if (!fs::exists(p)) throw Failure{kExitUsage, "dataset file not found: " + p.string()};
    const std::string split = training ? "train" : "test";
    m.input(split + "_images", images);
    m.input(split + "_labels", labels);
    return guarded(kExitRuntime, [&] { return load_mnist(images, labels, split); });
}

fs::path input_file(const std::string& flag_value, const RunConfig& cfg, const char* default_name) {
    const fs::path p = flag_value.empty() ? out_path(cfg) / default_name : fs::path(flag_value);
    if (!fs::exists(p)) throw Failure{kExitUsage, "input file not found: " + p.string()};
    return p;
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), pattern, v);
    return buf;
}

void write_manifest(const RunConfig& cfg, const std::string& command, const Manifest& m) {
    const auto dir = out_path(cfg);
    nlohmann::json files = nlohmann::json::array();
    std::vector<fs::path> found;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().filename() != "manifest.json") found.push_back(entry.path());
    std::sort(found.begin(), found.end());
    for (const auto& p : found)
        files.push_back({{"path", fs::relative(p, dir).generic_string()},
                         {"bytes", fs::file_size(p)},
                         {"sha256", sha256_file(p)}});
    nlohmann::json config = nlohmann::json::object();
    for (const auto& [k, v] : config_snapshot(cfg)) config[k] = v;
    const nlohmann::json manifest{{"tool", "snnconv"},  {"version", kToolVersion}, {"command", command},
                                  {"config", config},   {"inputs", m.inputs},      {"stage_seconds", m.stages},
                                  {"metrics", m.metrics}, {"files", files}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

void cmd_train(const RunConfig& cfg, std::ostream& out, Manifest& m) {
    auto train_set = load_split(cfg, true, m);
    const auto test_set = load_split(cfg, false, m);
    if (cfg.train_subset > train_set.size())
        throw Failure{kExitUsage, "training subset " + std::to_string(cfg.train_subset) + " exceeds " +
                                      std::to_string(train_set.size()) + " images"};
    if (cfg.train_subset > 0) train_set = train_set.slice(0, cfg.train_subset);

    const auto prepared = guarded(kExitUsage, [&] { return prepare_for_conversion(build_vgg_mini(cfg.model), cfg.conversion); });
    TrainConfig tc = cfg.train;
    tc.threads = cfg.threads;
    const auto net = m.timed("train", [&] {
        return guarded(kExitRuntime, [&] {
            return train(prepared.spec, train_set, tc, [&](const EpochStats& s) {
                out << "epoch " << s.epoch << " loss " << fmt("%.6f", s.loss) << " train_accuracy "
                    << fmt("%.4f", s.train_accuracy) << "\n"
                    << std::flush;
            });
        });
    });
    const double accuracy = m.timed("evaluate", [&] { return guarded(kExitRuntime, [&] { return evaluate(net, test_set, cfg.threads); }); });

    const auto dir = out_path(cfg);
    guarded(kExitRuntime, [&] {
        save_network(net, dir / "network.snnet");
        std::string csv = "epoch,loss,train_accuracy\n";
        for (const auto& s : net.history)
            csv += std::to_string(s.epoch) + "," + fmt("%.6g", s.loss) + "," + fmt("%.6g", s.train_accuracy) + "\n";
        write_text(dir / "train_metrics.csv", csv);
    });
    m.metrics["test_accuracy"] = accuracy;
    m.metrics["epochs"] = net.history.size();
    out << "test_accuracy " << fmt("%.4f", accuracy) << "\n";
}

void cmd_convert(const RunConfig& cfg, const Options& o, std::ostream& out, Manifest& m) {
    const auto network_path = input_file(o.network_path, cfg, "network.snnet");
    m.input("network", network_path);
    const auto calibration = load_split(cfg, true, m);
    if (cfg.conversion.calibration_sample_count > calibration.size())
        throw Failure{kExitUsage, "calibration subset exceeds the training split"};
    const auto result = m.timed("convert", [&] {
        return guarded(kExitConversion, [&] {
            const auto net = load_network(network_path);
            auto r = convert(net, calibration, cfg.conversion);
            if (!report_replays(r.report))
                throw Error(ErrorKind::NonCompliantTopology, "substitution ledger does not replay onto the result");
            return r;
        });
    });
    const auto dir = out_path(cfg);
    guarded(kExitConversion, [&] {
        save_spiking(result.network, dir / "spiking.snnspk");
        write_text(dir / "conversion_report.txt", report_to_text(result.report));
    });
    m.metrics["spiking_layers"] = result.network.layers.size();
    m.metrics["scales"] = result.report.scales;
    out << "substitutions " << result.report.substitutions.size() << "\n";
    for (std::size_t i = 0; i < result.report.scales.size(); ++i)
        out << "scale " << i << " " << fmt("%.6g", result.report.scales[i]) << "\n";
}

void cmd_sweep(const RunConfig& cfg, const Options& o, std::ostream& out, Manifest& m) {
    const auto spiking_path = input_file(o.spiking_path, cfg, "spiking.snnspk");
    m.input("spiking", spiking_path);
    const auto test_set = load_split(cfg, false, m);
    if (cfg.eval_subset > test_set.size())
        throw Failure{kExitUsage, "evaluation subset " + std::to_string(cfg.eval_subset) + " exceeds " +
                                      std::to_string(test_set.size()) + " test images"};
    const auto subset = test_set.slice(0, cfg.eval_subset);
    const auto net = guarded(kExitSimulation, [&] { return load_spiking(spiking_path); });
    SimConfig sim = cfg.sim;
    sim.threads = cfg.threads;
    const auto sweep = m.timed("sweep", [&] { return guarded(kExitSimulation, [&] { return rate_sweep(net, subset, cfg.rates, sim); }); });
    const auto dir = out_path(cfg);
    const auto csv = sweep_to_csv(sweep);
    guarded(kExitSimulation, [&] {
        write_text(dir / "sweep.csv", csv);
        write_text(dir / "accuracy_curves.csv", curves_to_csv(sweep));
    });
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : sweep.points)
        points.push_back({{"rate_hz", p.rate_hz}, {"accuracy", p.accuracy}, {"mean_spikes", p.mean_spikes},
                          {"mean_latency_steps", p.mean_latency_steps}});
    m.metrics["horizon_steps"] = sim.horizon_steps;
    m.metrics["images"] = subset.size();
    m.metrics["sweep"] = points;
    out << csv;
}

std::vector<std::size_t> image_indices(const Options& o, std::size_t available) {
    if (o.index.has_value() == !o.range.empty()) throw Failure{kExitUsage, "give exactly one of --index or --range"};
    std::size_t first = 0, last = 0;
    if (o.index) {
        first = last = *o.index;
    } else {
        const auto dots = o.range.find("..");
        try {
            if (dots == std::string::npos) throw std::invalid_argument("no ..");
            std::size_t used_a = 0, used_b = 0;
            const auto a = o.range.substr(0, dots), b = o.range.substr(dots + 2);
            first = std::stoul(a, &used_a);
            last = std::stoul(b, &used_b);
            if (used_a != a.size() || used_b != b.size() || a[0] == '-' || b[0] == '-') throw std::invalid_argument("junk");
        } catch (const std::exception&) {
            throw Failure{kExitUsage, "--range expects A..B, got '" + o.range + "'"};
        }
        if (last < first) throw Failure{kExitUsage, "--range end precedes its start"};
    }
    if (last >= available)
        throw Failure{kExitUsage, "image index " + std::to_string(last) + " outside the " + std::to_string(available) +
                                      "-image test split"};
    std::vector<std::size_t> out;
    for (auto i = first; i <= last; ++i) out.push_back(i);
    return out;
}

void cmd_encode_dvs(const RunConfig& cfg, const Options& o, std::ostream& out, Manifest& m) {
    const auto test_set = load_split(cfg, false, m);
    const auto indices = image_indices(o, test_set.size());
    EncoderConfig enc = cfg.sim.encoder;
    enc.dt = cfg.sim.dt;
    enc.horizon_steps = cfg.sim.saccade.motion_steps() + 1;
    enc.scheme = EncoderScheme::Dvs;
    const auto dir = out_path(cfg) / "events";
    std::size_t total = 0;
    m.timed("encode", [&] {
        guarded(kExitRuntime, [&] {
            for (auto i : indices) {
                const auto image = normalize(test_set.image(i));
                const auto events = dvs_emulate(image, test_set.rows(), test_set.cols(), cfg.sim.saccade, enc);
                const auto stem = "dvs_" + std::to_string(i);
                if (cfg.event_format != "binary") write_text(dir / (stem + ".csv"), events_to_csv(events));
                if (cfg.event_format != "csv") write_bytes(dir / (stem + ".bin"), events_to_binary(events));
                out << "image " << i << " label " << test_set.label(i) << " events " << events.size() << "\n";
                total += events.size();
            }
        });
    });
    m.metrics["images"] = indices.size();
    m.metrics["events"] = total;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Train a small CNN on MNIST, convert it to a spiking network and simulate it"};
    app.name(args.empty() ? "snnconv" : fs::path(args[0]).filename().string());
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);
    Options o;
    auto* train_cmd = app.add_subcommand("train", "train the analog network");
    auto* convert_cmd = app.add_subcommand("convert", "convert a trained network into a spiking one");
    auto* sweep_cmd = app.add_subcommand("sweep", "simulate the spiking network across input rates");
    auto* dvs_cmd = app.add_subcommand("encode-dvs", "emit DVS events for test images");
    for (auto* cmd : {train_cmd, convert_cmd, sweep_cmd, dvs_cmd}) add_common(cmd, o);
    for (auto* cmd : {train_cmd, convert_cmd, sweep_cmd})
        cmd->add_option("--subset", o.subset, "train: training images; convert: calibration images; sweep: test images");
    convert_cmd->add_option("--network", o.network_path, "trained network file (default <out>/network.snnet)");
    sweep_cmd->add_option("--spiking", o.spiking_path, "spiking network file (default <out>/spiking.snnspk)");
    sweep_cmd->add_option("--rates", o.rates, "comma-separated maximum input rates in Hz");
    dvs_cmd->add_option("--index", o.index, "test image index");
    dvs_cmd->add_option("--range", o.range, "inclusive index range A..B");

    std::vector<const char*> argv;
    argv.push_back(args.empty() ? "snnconv" : args[0].c_str());
    for (std::size_t i = 1; i < args.size(); ++i) argv.push_back(args[i].c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    o.command = app.get_subcommands().front()->get_name();

    try {
        const auto cfg = build_config(o);
        Manifest m;
        if (!o.config_path.empty()) m.input("config", o.config_path);
        if (o.command == "train") cmd_train(cfg, out, m);
        else if (o.command == "convert") cmd_convert(cfg, o, out, m);
        else if (o.command == "sweep") cmd_sweep(cfg, o, out, m);
        else cmd_encode_dvs(cfg, o, out, m);
        guarded(kExitRuntime, [&] { write_manifest(cfg, o.command, m); });
        return kExitOk;
    } catch (const Failure& f) {
        err << "error: " << f.message << "\n";
        return f.code;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace snn
