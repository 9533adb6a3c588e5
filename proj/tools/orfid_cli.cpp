#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "orfid/config.hpp"
#include "orfid/pipeline.hpp"

namespace fs = std::filesystem;
using namespace orfid;

namespace {

void require_file(const std::string& path, const char* what) {
    if (!fs::exists(path))
        throw std::runtime_error(std::string("missing ") + what + ": " + path);
}

RunConfig load_base_config(const std::string& config_path) {
    if (config_path.empty()) return RunConfig{};
    require_file(config_path, "config");
    return parse_config_file(config_path);
}

std::string manifest_path(const std::string& out) { return out + ".manifest.json"; }

int run_gen(const RunConfig& cfg, const std::string& out) {
    cfg.dataset.validate();
    const Dataset ds = generate_dataset(cfg.dataset);
    write_rfds(ds, out);
    write_manifest(manifest_path(out), "gen", to_json(cfg), {}, {out});
    std::cout << "wrote " << ds.samples.size() << " samples to " << out << "\n";
    return 0;
}

std::vector<int> resolve_known(const RunConfig& cfg, const Dataset& ds) {
    std::vector<int> known = cfg.known;
    if (known.empty()) known = all_devices(ds);
    validate_known_devices(known, ds.num_classes);
    return known;
}

int run_train(const RunConfig& cfg, const std::string& data_path, const std::string& out,
              const std::string& dump_spec) {
    require_file(data_path, "dataset");
    const Dataset ds = read_rfds(data_path);
    const std::vector<int> known = resolve_known(cfg, ds);
    const SplitSpectrograms split = split_spectrograms(ds, known, cfg.stft);
    if (!dump_spec.empty() && !split.train.empty())
        dump_spectrogram_csv(split.train.front(), dump_spec);

    NetworkConfig ncfg = cfg.network;
    ncfg.alpha = static_cast<int>(known.size());
    ncfg.input_rows = static_cast<int>(cfg.stft.fft_len());
    ncfg.input_cols = static_cast<int>(cfg.stft.frame_count(ds.sample_len));
    Network net(ncfg, cfg.train.seed);
    const TrainResult tr = train(net, split.train, split.train_labels, cfg.train,
                                 [](int epoch, double loss) {
                                     std::cerr << "epoch " << epoch << " loss " << loss << "\n";
                                 });
    save_checkpoint(net, known, out);
    write_manifest(manifest_path(out), "train", to_json(cfg), {data_path}, {out});
    std::cout << "trained " << tr.epochs_run << " epochs, final loss "
              << tr.epoch_loss.back() << ", checkpoint " << out << "\n";
    return 0;
}

int run_fit_evt(const RunConfig& cfg, const std::string& model_path,
                const std::string& data_path, const std::string& out) {
    require_file(model_path, "model");
    require_file(data_path, "dataset");
    LoadedCheckpoint ckpt = load_checkpoint(model_path);
    const Dataset ds = read_rfds(data_path);
    validate_known_devices(ckpt.known_devices, ds.num_classes);
    const OpenSetModel model =
        fit_openset_from_checkpoint(ckpt.net, ds, ckpt.known_devices, cfg.stft, cfg.openset);
    write_osm(model, out);
    write_manifest(manifest_path(out), "fit-evt", to_json(cfg), {model_path, data_path}, {out});
    std::cout << "fitted " << model.classes.size() << " class models (beta " << model.beta
              << ") to " << out << "\n";
    return 0;
}

int run_eval(const RunConfig& cfg, const std::string& model_path, const std::string& osm_path,
             const std::string& data_path, const std::string& out,
             const std::string& dump_spec) {
    require_file(model_path, "model");
    require_file(osm_path, "open-set model");
    require_file(data_path, "dataset");
    LoadedCheckpoint ckpt = load_checkpoint(model_path);
    const OpenSetModel model = read_osm(osm_path);
    const Dataset ds = read_rfds(data_path);
    validate_known_devices(ckpt.known_devices, ds.num_classes);
    if (model.alpha != static_cast<int>(ckpt.known_devices.size()))
        throw std::runtime_error("eval: checkpoint and open-set model disagree on alpha");

    const SplitSpectrograms split = split_spectrograms(ds, ckpt.known_devices, cfg.stft);
    if (!dump_spec.empty() && !split.test.empty())
        dump_spectrogram_csv(split.test.front(), dump_spec);
    std::vector<ActivationRecord> test_avs = extract_avs(ckpt.net, split.test);
    const int n_te = openness_n_te(ds);
    const EvalReport report = cfg.theta
                                  ? evaluate_hard_threshold(test_avs, model, *cfg.theta, n_te)
                                  : evaluate_openmax(test_avs, model, n_te);
    if (report.openness_value < 0.0)
        std::cerr << "warning: negative openness (" << report.openness_value
                  << "); class counts look inconsistent\n";
    write_report_json(report, out);
    write_manifest(manifest_path(out), "eval", to_json(cfg),
                   {model_path, osm_path, data_path}, {out});
    const double a_acc = cfg.literal_eq15 ? report.a_acc_literal_eq15 : report.acc.a_acc;
    std::cout << "KP " << report.counts.kp << "  KN " << report.counts.kn << "  UP "
              << report.counts.up << "  UN " << report.counts.un << "\n";
    if (report.acc.c_acc) std::cout << "C-accuracy " << *report.acc.c_acc << "\n";
    if (report.acc.o_acc) std::cout << "O-accuracy " << *report.acc.o_acc << "\n";
    std::cout << "A-accuracy " << a_acc << (cfg.literal_eq15 ? "  (literal eq. 15)" : "")
              << "\nreport " << out << "\n";
    return 0;
}

int run_sweep_cmd(const RunConfig& cfg, const std::string& model_path,
                  const std::string& data_path, const std::string& out) {
    require_file(data_path, "dataset");
    const Dataset ds = read_rfds(data_path);
    SweepInputs in;
    in.dataset = &ds;
    in.stft_cfg = cfg.stft;
    in.os_cfg = cfg.openset;
    in.net_cfg = cfg.network;
    in.net_cfg.input_rows = static_cast<int>(cfg.stft.fft_len());
    in.net_cfg.input_cols = static_cast<int>(cfg.stft.frame_count(ds.sample_len));
    in.train_cfg = cfg.train;
    LoadedCheckpoint ckpt;
    std::vector<std::string> inputs{data_path};
    if (cfg.sweep_kind != SweepKind::Openness) {
        require_file(model_path, "model");
        ckpt = load_checkpoint(model_path);
        validate_known_devices(ckpt.known_devices, ds.num_classes);
        in.net = &ckpt.net;
        in.known = ckpt.known_devices;
        inputs.push_back(model_path);
    }
    const std::vector<SweepRow> rows = run_sweep(cfg.sweep_kind, in);
    write_sweep_csv(rows, out);
    write_manifest(manifest_path(out), "sweep", to_json(cfg), inputs, {out});
    std::cout << rows.size() << " sweep rows (" << to_string(cfg.sweep_kind) << ") to " << out
              << "\n";
    return 0;
}

int run_report(const std::string& in_path) {
    require_file(in_path, "report");
    if (in_path.size() > 4 && in_path.substr(in_path.size() - 4) == ".csv") {
        std::ifstream in(in_path);
        std::string line;
        while (std::getline(in, line)) std::cout << line << "\n";
        return 0;
    }
    std::ifstream in(in_path);
    nlohmann::json j;
    in >> j;
    const auto& c = j.at("counts");
    std::cout << "confusion: KP " << c.at("kp") << "  KN " << c.at("kn") << "  UP "
              << c.at("up") << "  UN " << c.at("un") << "\n";
    if (j.contains("c_accuracy")) std::cout << "C-accuracy " << j.at("c_accuracy") << "\n";
    if (j.contains("o_accuracy")) std::cout << "O-accuracy " << j.at("o_accuracy") << "\n";
    std::cout << "A-accuracy " << j.at("a_accuracy") << "\n";
    std::cout << "A-accuracy (literal eq. 15) " << j.at("a_accuracy_literal_eq15") << "\n";
    std::cout << "openness " << j.at("openness") << "\n";
    const auto& cfgj = j.at("config");
    std::cout << "metric " << cfgj.at("metric").get<std::string>() << ", mode "
              << cfgj.at("mode").get<std::string>() << ", tail " << cfgj.at("tail") << ", beta "
              << cfgj.at("beta");
    if (cfgj.contains("theta")) std::cout << ", theta " << cfgj.at("theta");
    std::cout << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"open-set RF device identification pipeline"};
    app.require_subcommand(1);

    std::string config_path, data_path, model_path, osm_path, out_path, in_path, dump_spec;

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic RFDS dataset");
    int g_devices = 6, g_per_device = 600;
    std::string g_content = "data";
    double g_snr = 20.0, g_spread = 1.0;
    std::uint64_t g_seed = 1;
    gen->add_option("--config", config_path, "JSON config file");
    auto* og_dev = gen->add_option("--devices", g_devices, "number of emulated devices");
    auto* og_per = gen->add_option("--per-device", g_per_device, "samples per device");
    auto* og_content = gen->add_option("--content", g_content, "signal content: voice|data")
                           ->check(CLI::IsMember({"voice", "data"}));
    auto* og_snr = gen->add_option("--snr", g_snr, "AWGN SNR in dB");
    auto* og_spread = gen->add_option("--spread", g_spread, "fingerprint spread factor");
    auto* og_seed = gen->add_option("--seed", g_seed, "dataset seed");
    gen->add_option("--out", out_path, "output RFDS path")->required();

    // train
    auto* tr = app.add_subcommand("train", "train the CNN feature extractor");
    std::vector<int> t_known;
    int t_epochs = 0, t_batch = 0;
    double t_lr = -1.0, t_early = -1.0;
    std::uint64_t t_seed = 0;
    bool t_seed_set = false;
    tr->add_option("--config", config_path, "JSON config file");
    tr->add_option("--data", data_path, "training RFDS dataset")->required();
    tr->add_option("--out", out_path, "output checkpoint (.rfnn)")->required();
    tr->add_option("--known", t_known, "known device ids (default: all)")->delimiter(',');
    auto* ot_epochs = tr->add_option("--epochs", t_epochs, "max training epochs");
    auto* ot_batch = tr->add_option("--batch", t_batch, "batch size");
    auto* ot_lr = tr->add_option("--lr", t_lr, "Adam learning rate");
    auto* ot_early = tr->add_option("--early-stop-loss", t_early, "stop when epoch loss drops below");
    auto* ot_seed = tr->add_option("--seed", t_seed, "training seed");
    ot_seed->each([&](const std::string&) { t_seed_set = true; });
    tr->add_option("--dump-spectrogram", dump_spec, "debug: write first spectrogram CSV");

    // fit-evt
    auto* fe = app.add_subcommand("fit-evt", "fit per-class MAV + Weibull tail models");
    std::size_t f_tail = 0;
    std::string f_metric, f_mode;
    double f_beta = -1.0, f_mink = -1.0;
    fe->add_option("--config", config_path, "JSON config file");
    fe->add_option("--model", model_path, "trained checkpoint (.rfnn)")->required();
    fe->add_option("--data", data_path, "training RFDS dataset")->required();
    fe->add_option("--out", out_path, "output open-set model (.osm)")->required();
    auto* of_tail = fe->add_option("--tail", f_tail, "Weibull tail size");
    auto* of_metric = fe->add_option("--metric", f_metric,
                                     "distance metric: eucos|euclidean|cosine|canberra|chebyshev|minkowski");
    auto* of_mode = fe->add_option("--mode", f_mode, "scoring mode: paper|standard")
                        ->check(CLI::IsMember({"paper", "standard"}));
    auto* of_beta = fe->add_option("--beta", f_beta, "distance weight (0 = auto-balance)");
    auto* of_mink = fe->add_option("--minkowski-p", f_mink, "Minkowski order");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate on a dataset");
    double e_theta = 0.0;
    bool e_literal = false;
    ev->add_option("--config", config_path, "JSON config file");
    ev->add_option("--model", model_path, "trained checkpoint (.rfnn)")->required();
    ev->add_option("--osm", osm_path, "fitted open-set model (.osm)")->required();
    ev->add_option("--data", data_path, "RFDS dataset")->required();
    ev->add_option("--out", out_path, "output report JSON")->required();
    auto* oe_theta =
        ev->add_option("--theta", e_theta, "use the hard-threshold baseline at this threshold");
    ev->add_flag("--literal-eq15", e_literal, "print the literal printed-formula A-accuracy");
    ev->add_option("--dump-spectrogram", dump_spec, "debug: write first spectrogram CSV");

    // sweep
    auto* sw = app.add_subcommand("sweep", "run a parameter sweep");
    std::string s_kind;
    sw->add_option("--config", config_path, "JSON config file");
    sw->add_option("--kind", s_kind, "threshold|tail|openness|metric")->required()
        ->check(CLI::IsMember({"threshold", "tail", "openness", "metric"}));
    sw->add_option("--data", data_path, "RFDS dataset")->required();
    sw->add_option("--model", model_path, "trained checkpoint (.rfnn)");
    sw->add_option("--out", out_path, "output CSV")->required();

    // report
    auto* rp = app.add_subcommand("report", "pretty-print a report or sweep file");
    rp->add_option("--in", in_path, "report JSON or sweep CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = load_base_config(config_path);

        if (gen->parsed()) {
            if (og_dev->count()) cfg.dataset.num_devices = g_devices;
            if (og_per->count()) cfg.dataset.samples_per_device = g_per_device;
            if (og_content->count()) cfg.dataset.content = signal_content_from_string(g_content);
            if (og_snr->count()) cfg.dataset.snr_db = g_snr;
            if (og_spread->count()) cfg.dataset.fingerprint_spread = g_spread;
            if (og_seed->count()) cfg.dataset.seed = g_seed;
            return run_gen(cfg, out_path);
        }
        if (tr->parsed()) {
            if (!t_known.empty()) cfg.known = t_known;
            if (ot_epochs->count()) cfg.train.max_epochs = t_epochs;
            if (ot_batch->count()) cfg.train.batch_size = t_batch;
            if (ot_lr->count()) cfg.train.learning_rate = t_lr;
            if (ot_early->count()) cfg.train.early_stop_loss = t_early;
            if (t_seed_set) cfg.train.seed = t_seed;
            return run_train(cfg, data_path, out_path, dump_spec);
        }
        if (fe->parsed()) {
            if (of_tail->count()) cfg.openset.tail_size = f_tail;
            if (of_metric->count()) cfg.openset.metric = metric_from_string(f_metric);
            if (of_mode->count()) cfg.openset.mode = mode_from_string(f_mode);
            if (of_beta->count()) cfg.openset.beta = f_beta;
            if (of_mink->count()) cfg.openset.minkowski_p = f_mink;
            return run_fit_evt(cfg, model_path, data_path, out_path);
        }
        if (ev->parsed()) {
            if (oe_theta->count()) cfg.theta = e_theta;
            if (e_literal) cfg.literal_eq15 = true;
            return run_eval(cfg, model_path, osm_path, data_path, out_path, dump_spec);
        }
        if (sw->parsed()) {
            cfg.sweep_kind = sweep_kind_from_string(s_kind);
            return run_sweep_cmd(cfg, model_path, data_path, out_path);
        }
        if (rp->parsed()) return run_report(in_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
