#pragma once

// Command-line front end. Every command validates its whole specification before
// loading data or training; usage and configuration problems exit with 2, runtime
// failures with 1.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mclkit/config.hpp"
#include "mclkit/dataset.hpp"
#include "mclkit/evaluate.hpp"

namespace mclkit {

namespace cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using Real = float;

/// Raw flag values before validation.
struct Args {
    std::string command;
    std::string dataset, config, measurement, teacher, mask, seed, out, metric = "accuracy", method, checkpoint;
    std::optional<std::size_t> k, epochs;
    std::optional<double> rho, lambda, labeled_fraction;
    // synth
    std::string shape = "16x16x1";
    std::size_t classes = 4, per_class = 200;
    double noise = 0.05;
};

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

inline Shape parse_shape(const std::string& text) { return MeasurementConfig::parse(text).dims; }

inline RunSettings settings_from(const Args& a) {
    RunSettings s;
    if (!a.config.empty()) {
        require(fs::is_regular_file(a.config), "config file '" + a.config + "' does not exist");
        s.load_file(a.config);
    }
    if (!a.measurement.empty()) s.measurement = MeasurementConfig::parse(a.measurement);
    if (!a.seed.empty()) s.seeds = parse_seed_list(a.seed);
    if (a.epochs) s.set_epochs(*a.epochs);
    if (a.rho) s.train.rho = *a.rho;
    if (a.lambda) s.train.lambda = *a.lambda;
    if (a.labeled_fraction) s.labeled_fraction = *a.labeled_fraction;
    if (a.k) s.k = *a.k;
    s.validate();
    return s;
}

inline DatasetHeader check_dataset_dir(const std::string& dir) {
    require(!dir.empty(), "--dataset is required");
    require(fs::is_directory(dir), "dataset directory '" + dir + "' does not exist");
    for (const char* f : {"train.mcld", "test.mcld"})
        require(fs::is_regular_file(fs::path(dir) / f), "dataset directory '" + dir + "' has no " + f);
    const DatasetHeader h = peek_dataset_file((fs::path(dir) / "train.mcld").string());
    require(h.shape.size() == 3, "dataset samples must be HxWxC, got " + shape_string(h.shape));
    require(h.classes >= 2, "dataset declares fewer than 2 classes");
    return h;
}

inline void check_out(const std::string& out) { require(!out.empty(), "--out is required"); }

inline std::uint64_t single_seed(const RunSettings& s) {
    require(s.seeds.size() == 1, "this command takes exactly one seed");
    return s.seeds.front();
}

inline MeasurementConfig measurement_for(const RunSettings& s, const DatasetHeader& h) {
    require(s.measurement.has_value(), "--measurement is required");
    s.measurement->validate(h.shape);
    return *s.measurement;
}

inline ModelSpec check_teacher(const std::string& path, const DatasetHeader& h,
                               const std::optional<MeasurementConfig>& meas) {
    require(fs::is_regular_file(path), "teacher checkpoint '" + path + "' does not exist");
    const ModelSpec spec = spec_from_records(read_checkpoint(path));
    require(spec.kind == ModelKind::prior, "'" + path + "' is not a prior-generating model checkpoint");
    require(spec.signal == h.shape, "teacher signal " + shape_string(spec.signal) + " does not match dataset " +
                                        shape_string(h.shape));
    require(spec.classes == h.classes, "teacher has " + std::to_string(spec.classes) + " classes, dataset has " +
                                           std::to_string(h.classes));
    if (meas)
        require(meas->dims == spec.measurement, "teacher measurement " + shape_string(spec.measurement) +
                                                    " does not match --measurement " + meas->str());
    return spec;
}

inline json settings_json(const RunSettings& s) {
    json j;
    j["epochs"] = s.train.epochs;
    j["lr_values"] = s.train.lr_values;
    j["lr_switch"] = s.train.lr_switch;
    j["batch_size"] = s.train.batch_size;
    j["max_norm"] = s.train.max_norm;
    j["flip"] = s.train.flip;
    j["shift_fraction"] = s.train.shift_fraction;
    j["lambda"] = s.train.lambda;
    j["rho"] = s.train.rho;
    j["epochs_per_round"] = s.train.epochs_per_round;
    j["round_cap"] = s.train.round_cap;
    j["width"] = s.width;
    j["capacity"] = s.capacity == Capacity::small ? "small" : "large";
    j["labeled_fraction"] = s.labeled_fraction;
    j["validation_fraction"] = s.validation_fraction;
    j["k"] = s.k;
    j["seeds"] = s.seeds;
    if (s.measurement) j["measurement"] = s.measurement->str();
    return j;
}

inline json log_json(const RunLog& log) {
    json stages = json::array();
    for (const auto& st : log.stages)
        stages.push_back({{"name", st.name},
                          {"metric", st.metric},
                          {"first_epoch", st.first_epoch},
                          {"epochs", st.epochs},
                          {"best_epoch", st.best_epoch},
                          {"best_metric", st.best_metric},
                          {"seconds", st.seconds}});
    return stages;
}

inline void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write '" + p.string() + "'");
    f << text;
}

inline void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

inline void write_history(const fs::path& p, const History& h) {
    std::ostringstream os;
    write_history_csv(os, h);
    write_text(p, os.str());
}

inline DatasetBundle<Real> load(const Args& a, const RunSettings& s, std::uint64_t seed) {
    return load_dataset<Real>(a.dataset, {s.validation_fraction, seed});
}

/// Writes model.ckpt, history.csv and manifest.json for a single training run.
template <typename Model>
void finish_training_run(const Args& a, const RunSettings& s, const Model& model, const RunLog& log,
                         const DatasetBundle<Real>& data, json extra, std::ostream& out) {
    const fs::path dir(a.out);
    fs::create_directories(dir);
    save_checkpoint<Real>(model, (dir / "model.ckpt").string());
    write_history(dir / "history.csv", log.history);
    const double val_acc = accuracy<Real>(model, data.validation);
    const double test_acc = accuracy<Real>(model, data.test);
    json m;
    m["command"] = a.command;
    m["dataset"] = a.dataset;
    m["model"] = {{"kind", to_string(model.spec.kind)},
                  {"signal", shape_string(model.spec.signal)},
                  {"measurement", shape_string(model.spec.measurement)},
                  {"classes", model.spec.classes},
                  {"parameters", model.parameter_count()},
                  {"checkpoint_crc32", hex32(file_crc32((dir / "model.ckpt").string()))}};
    m["settings"] = settings_json(s);
    m["stages"] = log_json(log);
    m["notes"] = log.notes;
    m["results"] = {{"validation_accuracy", val_acc}, {"test_accuracy", test_acc}};
    for (auto& [k, v] : extra.items()) m[k] = v;
    write_json(dir / "manifest.json", m);
    out << a.command << ": test accuracy " << format_double(test_acc) << ", wrote " << (dir / "model.ckpt").string()
        << "\n";
}

inline int cmd_synth(const Args& a, std::ostream& out) {
    check_out(a.out);
    const RunSettings s = settings_from(a);
    SynthOptions opt;
    opt.shape = parse_shape(a.shape);
    opt.classes = a.classes;
    opt.per_class = a.per_class;
    opt.noise = a.noise;
    const auto r = synth_dataset<Real>(single_seed(s), opt);
    write_dataset(a.out, r.bundle);
    out << "synth: " << r.bundle.train.size() << " train, " << r.bundle.validation.size() << " validation, "
        << r.bundle.test.size() << " test samples; nearest-template accuracy "
        << format_double(r.nearest_template_accuracy) << "\n";
    return 0;
}

inline int cmd_train_prior(const Args& a, std::ostream& out, bool semisup) {
    const DatasetHeader h = check_dataset_dir(a.dataset);
    check_out(a.out);
    const RunSettings s = settings_from(a);
    const MeasurementConfig meas = measurement_for(s, h);
    const std::uint64_t seed = single_seed(s);
    TrainConfig cfg = s.train;
    cfg.seed = seed;

    const auto data = load(a, s, seed);
    PriorModel<Real> prior = build_prior<Real>(data.shape, meas, data.classes, seed, s.width, s.capacity);
    RunLog log;
    json extra;
    if (!semisup) {
        train_prior_supervised(prior, data.train, data.validation, cfg, log);
    } else {
        auto split = split_semisup(data.train, s.labeled_fraction, seed);
        SampleSet<Real> pool = split.unlabeled;
        pool.append(data.unlabeled);
        const auto res = train_prior_semisup(prior, split.labeled, pool, data.validation, cfg, log);
        json rounds = json::array();
        for (const auto& r : res.rounds)
            rounds.push_back(
                {{"round", r.round}, {"labeled", r.labeled}, {"unlabeled", r.unlabeled}, {"selected", r.selected}});
        extra["self_labeling"] = {{"initial_labeled", split.labeled.size()},
                                  {"initial_unlabeled", pool.size()},
                                  {"final_labeled", res.enlarged.size()},
                                  {"final_unlabeled", res.remaining.size()},
                                  {"capped", res.capped},
                                  {"rounds", rounds}};
    }
    finish_training_run(a, s, prior, log, data, extra, out);
    return 0;
}

inline int cmd_train_student(const Args& a, std::ostream& out) {
    const DatasetHeader h = check_dataset_dir(a.dataset);
    check_out(a.out);
    const RunSettings s = settings_from(a);
    const std::string& method = a.method;
    require(method == "mcl" || method == "mclwop" || method == "mclwp" || method == "mclwp-s",
            "--method must be one of mcl, mclwop, mclwp, mclwp-s");
    const bool uses_teacher = method == "mclwp" || method == "mclwp-s";
    require(!uses_teacher || !a.teacher.empty(), "--method " + method + " requires --teacher");
    require(uses_teacher || a.teacher.empty(), "--teacher applies only to mclwp and mclwp-s");
    require(uses_teacher || a.mask.empty(), "--mask applies only to mclwp and mclwp-s");
    const StageMask mask = a.mask.empty() ? StageMask{} : StageMask::parse(a.mask);
    std::optional<ModelSpec> tspec;
    if (uses_teacher) tspec = check_teacher(a.teacher, h, s.measurement);
    const MeasurementConfig meas = tspec ? MeasurementConfig{tspec->measurement} : measurement_for(s, h);
    meas.validate(h.shape);
    const std::uint64_t seed = single_seed(s);
    TrainConfig cfg = s.train;
    cfg.seed = seed;

    const auto data = load(a, s, seed);
    RunLog log;
    json extra;
    extra["method"] = method;
    if (method == "mcl") {
        auto m = build_mcl<Real>(data.shape, meas, data.classes, ModelKind::mcl_multilinear, seed, s.width, s.capacity);
        train_mcl_baseline(m, data.train, data.validation, cfg, log);
        finish_training_run(a, s, m, log, data, extra, out);
    } else if (method == "mclwop") {
        auto m = build_mcl<Real>(data.shape, meas, data.classes, ModelKind::mcl_nonlinear, seed, s.width, s.capacity);
        train_mclwop(m, data.train, data.validation, cfg, log);
        finish_training_run(a, s, m, log, data, extra, out);
    } else {
        const PriorModel<Real> teacher = load_prior<Real>(a.teacher);
        auto m = build_mcl<Real>(data.shape, meas, data.classes, ModelKind::mcl_nonlinear, seed, teacher.spec.width,
                                 teacher.spec.capacity);
        extra["mask"] = mask.str();
        extra["teacher"] = {{"path", a.teacher}, {"crc32", hex32(file_crc32(a.teacher))}};
        if (method == "mclwp") {
            train_mclwp(m, teacher, data.train, data.validation, cfg, mask, log);
        } else {
            auto split = split_semisup(data.train, s.labeled_fraction, seed);
            SampleSet<Real> pool = split.unlabeled;
            pool.append(data.unlabeled);
            train_mclwp_semisup(m, teacher, split.labeled, pool, data.validation, cfg, mask, log);
            extra["labeled"] = split.labeled.size();
            extra["unlabeled"] = pool.size();
        }
        finish_training_run(a, s, m, log, data, extra, out);
    }
    return 0;
}

inline int cmd_eval(const Args& a, std::ostream& out) {
    const DatasetHeader h = check_dataset_dir(a.dataset);
    require(!a.checkpoint.empty(), "--checkpoint is required");
    require(fs::is_regular_file(a.checkpoint), "checkpoint '" + a.checkpoint + "' does not exist");
    require(a.metric == "accuracy" || a.metric == "knn", "--metric must be accuracy or knn");
    const RunSettings s = settings_from(a);
    const ModelSpec spec = spec_from_records(read_checkpoint(a.checkpoint));
    require(spec.signal == h.shape, "checkpoint signal " + shape_string(spec.signal) + " does not match dataset " +
                                        shape_string(h.shape));
    require(spec.classes == h.classes, "checkpoint has " + std::to_string(spec.classes) + " classes, dataset has " +
                                           std::to_string(h.classes));
    const std::uint64_t seed = single_seed(s);

    const auto data = load(a, s, seed);
    const CompressiveNet<Real> m = load_checkpoint<Real>(a.checkpoint);
    ReportRow row{"eval-" + std::string(to_string(spec.kind)), "-", "-", "-", MeasurementConfig{spec.measurement}.str(),
                  std::to_string(seed), "", 0.0};
    if (a.metric == "accuracy") {
        row.metric = "test_accuracy";
        row.value = accuracy<Real>(m, data.test);
    } else {
        require(s.k <= data.train.size(), "--k exceeds the training set size");
        row.metric = "knn_k" + std::to_string(s.k);
        row.value = knn_compressive<Real>(m, data.train, data.test, s.k);
    }
    std::ostringstream csv;
    write_report_csv(csv, {row});
    if (!a.out.empty()) {
        fs::create_directories(a.out);
        write_text(fs::path(a.out) / "report.csv", csv.str());
    }
    out << csv.str();
    return 0;
}

/// Loads the teacher given by --teacher, or trains one into <out>/teacher.ckpt.
inline PriorModel<Real> obtain_teacher(const Args& a, const RunSettings& s, const MeasurementConfig& meas,
                                       const DatasetBundle<Real>& data, const TrainConfig& cfg, json& manifest) {
    if (!a.teacher.empty()) {
        manifest["teacher"] = {{"path", a.teacher}, {"trained_here", false}};
        return load_prior<Real>(a.teacher);
    }
    PriorModel<Real> prior = build_prior<Real>(data.shape, meas, data.classes, cfg.seed, s.width, s.capacity);
    RunLog log;
    train_prior_supervised(prior, data.train, data.validation, cfg, log);
    const fs::path p = fs::path(a.out) / "teacher.ckpt";
    save_checkpoint<Real>(prior, p.string());
    manifest["teacher"] = {{"path", p.string()}, {"trained_here", true}, {"stages", log_json(log)}};
    return prior;
}

inline int cmd_ablate(const Args& a, std::ostream& out, bool compare) {
    const DatasetHeader h = check_dataset_dir(a.dataset);
    check_out(a.out);
    const RunSettings s = settings_from(a);
    std::optional<MeasurementConfig> meas = s.measurement;
    std::size_t width = s.width;
    Capacity cap = s.capacity;
    if (!a.teacher.empty()) {
        const ModelSpec t = check_teacher(a.teacher, h, s.measurement);
        meas = MeasurementConfig{t.measurement};
        width = t.width;
        cap = t.capacity;
    }
    require(meas.has_value(), "--measurement or --teacher is required");
    meas->validate(h.shape);
    std::vector<std::uint64_t> seeds = s.seeds;
    if (compare && a.seed.empty()) seeds = {0, 1, 2};
    if (!compare) require(seeds.size() == 1, "this command takes exactly one seed");
    TrainConfig cfg = s.train;
    cfg.seed = seeds.front();

    fs::create_directories(a.out);
    const auto data = load(a, s, cfg.seed);
    json manifest;
    manifest["command"] = a.command;
    manifest["dataset"] = a.dataset;
    manifest["settings"] = settings_json(s);
    const PriorModel<Real> teacher = obtain_teacher(a, s, *meas, data, cfg, manifest);
    const StudentOptions opt{*meas, width, cap};
    const TrainSplits<Real> splits{data.train, data.validation, data.test};
    std::vector<ReportRow> rows;
    if (!compare) {
        auto r = run_ablation(teacher, splits, opt, cfg);
        rows = r.rows;
        manifest["teacher_crc32"] = hex32(r.teacher_crc);
        json runs = json::array();
        for (const auto& run : r.runs)
            runs.push_back({{"mask", run.mask.str()}, {"test_accuracy", run.test_accuracy}, {"stages", log_json(run.log)}});
        manifest["runs"] = runs;
    } else {
        auto r = compare_prior_effect(teacher, splits, opt, cfg, seeds);
        rows = r.rows;
        manifest["parameters"] = {{"mclwp", r.parameter_count_with}, {"mclwop", r.parameter_count_without}};
        manifest["median"] = {{"mclwp", median(r.with_prior)}, {"mclwop", median(r.without_prior)}};
    }
    std::ostringstream csv;
    write_report_csv(csv, rows);
    write_text(fs::path(a.out) / (compare ? "compare.csv" : "ablation.csv"), csv.str());
    write_json(fs::path(a.out) / "manifest.json", manifest);
    out << csv.str();
    return 0;
}

}  // namespace cli

/// Entry point of the mclkit executable; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    cli::Args a;
    CLI::App app{"Multilinear compressive learning toolkit"};
    app.require_subcommand(1);

    auto common = [&a](CLI::App* sub) {
        sub->add_option("--config", a.config, "key=value settings file");
        sub->add_option("--seed", a.seed, "seed, or comma-separated seed list");
        sub->add_option("--out", a.out, "output directory");
        sub->add_option("--epochs", a.epochs, "epochs per training procedure");
    };
    auto data_opts = [&a](CLI::App* sub) {
        sub->add_option("--dataset", a.dataset, "dataset directory");
        sub->add_option("--measurement", a.measurement, "measurement shape M1xM2xM3");
    };

    auto* synth = app.add_subcommand("synth", "generate the synthetic tensor dataset");
    common(synth);
    synth->add_option("--shape", a.shape, "signal shape HxWxC");
    synth->add_option("--classes", a.classes, "number of classes");
    synth->add_option("--per-class", a.per_class, "samples per class");
    synth->add_option("--noise", a.noise, "Gaussian noise standard deviation");

    auto* tp = app.add_subcommand("train-prior", "train the prior-generating (teacher) model");
    common(tp);
    data_opts(tp);

    auto* tps = app.add_subcommand("train-prior-semisup", "train the teacher with self-labeling");
    common(tps);
    data_opts(tps);
    tps->add_option("--rho", a.rho, "confidence threshold");
    tps->add_option("--labeled-fraction", a.labeled_fraction, "fraction of training labels kept");

    auto* ts = app.add_subcommand("train-student", "train an MCL student");
    common(ts);
    data_opts(ts);
    ts->add_option("--method", a.method, "mcl | mclwop | mclwp | mclwp-s")->required();
    ts->add_option("--teacher", a.teacher, "teacher checkpoint");
    ts->add_option("--mask", a.mask, "stage mask, e.g. 110");
    ts->add_option("--lambda", a.lambda, "distillation weight");
    ts->add_option("--labeled-fraction", a.labeled_fraction, "fraction of training labels kept (mclwp-s)");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    common(ev);
    ev->add_option("--dataset", a.dataset, "dataset directory");
    ev->add_option("--checkpoint", a.checkpoint, "model checkpoint");
    ev->add_option("--metric", a.metric, "accuracy | knn");
    ev->add_option("--k", a.k, "neighbours for knn (default 5)");

    auto* ab = app.add_subcommand("ablate", "train one student per stage mask");
    common(ab);
    data_opts(ab);
    ab->add_option("--teacher", a.teacher, "teacher checkpoint (trained here when omitted)");
    ab->add_option("--lambda", a.lambda, "distillation weight");

    auto* cp = app.add_subcommand("compare-prior", "paired MCLwP / MCLw/oP runs over seeds");
    common(cp);
    data_opts(cp);
    cp->add_option("--teacher", a.teacher, "teacher checkpoint (trained here when omitted)");
    cp->add_option("--lambda", a.lambda, "distillation weight");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }
    try {
        if (synth->parsed()) return (a.command = "synth", cli::cmd_synth(a, out));
        if (tp->parsed()) return (a.command = "train-prior", cli::cmd_train_prior(a, out, false));
        if (tps->parsed()) return (a.command = "train-prior-semisup", cli::cmd_train_prior(a, out, true));
        if (ts->parsed()) return (a.command = "train-student", cli::cmd_train_student(a, out));
        if (ev->parsed()) return (a.command = "eval", cli::cmd_eval(a, out));
        if (ab->parsed()) return (a.command = "ablate", cli::cmd_ablate(a, out, false));
        if (cp->parsed()) return (a.command = "compare-prior", cli::cmd_ablate(a, out, true));
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace mclkit
