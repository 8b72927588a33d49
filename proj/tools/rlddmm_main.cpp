// Command-line front end: register / evaluate / geodesic / diagnose / sweep.
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rlddmm/diagnostics.hpp"

namespace {

using nlohmann::json;
using namespace rlddmm;

constexpr const char* kToolVersion = "0.1.0";

constexpr int kExitArgs = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;
constexpr int kExitCorrespondence = 5;

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[64];
    std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
    return buf;
}

struct CommonArgs {
    std::string source;
    std::string target;
    std::string out = "out";
    std::string config_file;
    std::string correspondence;
    RegistrationConfig cfg;
    std::string data_term = "cd";
    std::string activation = "leaky";
    double alpha = 0.01;
    bool no_normalize = false;
    const CLI::App* app = nullptr;  // subcommand, for flag-presence queries
};

void add_register_flags(CLI::App& app, CommonArgs& a) {
    app.add_option("--source", a.source, "source cloud (obj/ply/xyz)")->required();
    app.add_option("--target", a.target, "target cloud")->required();
    app.add_option("--out", a.out, "output directory");
    app.add_option("--config", a.config_file, "key=value config file");
    app.add_option("--epochs", a.cfg.epochs);
    app.add_option("--L", a.cfg.L, "number of building blocks");
    app.add_option("--width", a.cfg.m, "block width m");
    app.add_option("--eta", a.cfg.eta, "ADAM learning rate");
    app.add_option("--sigma", a.cfg.objective.sigma);
    app.add_option("--data-term", a.data_term)
        ->check(CLI::IsMember({"cd", "med"}));
    app.add_option("--sinkhorn-eps", a.cfg.objective.sinkhorn.epsilon);
    app.add_option("--activation", a.activation)
        ->check(CLI::IsMember({"relu", "leaky", "tanh"}));
    app.add_option("--alpha", a.alpha, "leaky slope");
    app.add_option("--seed", a.cfg.seed);
    app.add_flag("--no-normalize", a.no_normalize);
    app.add_option("--correspondence", a.correspondence,
                   "file of 'source_index target_index' pairs");
}

// flat key=value file mirroring the config field names; explicit CLI flags win
void apply_config_file(CommonArgs& a) {
    if (a.config_file.empty()) return;
    std::ifstream in(a.config_file);
    if (!in) throw IoError("cannot open config '" + a.config_file + "'");
    // a key from the file applies only when the matching flag was not given
    const auto unset = [&](const char* flag) {
        return a.app == nullptr || a.app->count(flag) == 0;
    };
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidConfig("bad config line: '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "L") { if (unset("--L")) a.cfg.L = std::stoi(val); }
        else if (key == "m") { if (unset("--width")) a.cfg.m = std::stoi(val); }
        else if (key == "eta") { if (unset("--eta")) a.cfg.eta = std::stod(val); }
        else if (key == "sigma") { if (unset("--sigma")) a.cfg.objective.sigma = std::stod(val); }
        else if (key == "epochs") { if (unset("--epochs")) a.cfg.epochs = std::stoi(val); }
        else if (key == "seed") { if (unset("--seed")) a.cfg.seed = std::stoull(val); }
        else if (key == "data_term") { if (unset("--data-term")) a.data_term = val; }
        else if (key == "activation") { if (unset("--activation")) a.activation = val; }
        else if (key == "alpha") { if (unset("--alpha")) a.alpha = std::stod(val); }
        else if (key == "sinkhorn_epsilon") {
            if (unset("--sinkhorn-eps")) a.cfg.objective.sinkhorn.epsilon = std::stod(val);
        } else if (key == "sinkhorn_min_iters") a.cfg.objective.sinkhorn.min_iters = std::stoi(val);
        else if (key == "sinkhorn_max_iters") a.cfg.objective.sinkhorn.max_iters = std::stoi(val);
        else if (key == "sinkhorn_tol") a.cfg.objective.sinkhorn.tol = std::stod(val);
        else if (key == "normalize") {
            if (unset("--no-normalize")) a.no_normalize = (val == "false" || val == "0");
        } else if (key == "kinetic_weighting")
            a.cfg.objective.weighting = val == "table1" ? KineticWeighting::Table1
                                                        : KineticWeighting::Riemann;
        else throw InvalidConfig("unknown config key '" + key + "'");
    }
}

void finish_config(CommonArgs& a) {
    a.cfg.objective.data_term = a.data_term == "med" ? DataTerm::MED : DataTerm::CD;
    a.cfg.activation = make_activation(activation_from_name(a.activation), a.alpha);
    a.cfg.normalize = !a.no_normalize;
}

json config_snapshot(const CommonArgs& a) {
    json c;
    c["L"] = a.cfg.L;
    c["m"] = a.cfg.m;
    c["eta"] = a.cfg.eta;
    c["sigma"] = a.cfg.objective.sigma;
    c["epochs"] = a.cfg.epochs;
    c["activation"] = a.activation;
    c["alpha"] = a.alpha;
    c["data_term"] = a.data_term;
    c["sinkhorn_epsilon"] = a.cfg.objective.sinkhorn.epsilon;
    c["sinkhorn_min_iters"] = a.cfg.objective.sinkhorn.min_iters;
    c["sinkhorn_max_iters"] = a.cfg.objective.sinkhorn.max_iters;
    c["sinkhorn_tol"] = a.cfg.objective.sinkhorn.tol;
    c["seed"] = a.cfg.seed;
    c["normalize"] = a.cfg.normalize;
    c["kinetic_weighting"] =
        a.cfg.objective.weighting == KineticWeighting::Table1 ? "table1" : "riemann";
    return c;
}

json start_manifest(const std::string& command, const CommonArgs& a) {
    json m;
    m["command"] = command;
    m["source"] = a.source;
    m["target"] = a.target;
    m["out"] = a.out;
    m["seed"] = a.cfg.seed;
    m["tool_version"] = kToolVersion;
    m["config"] = config_snapshot(a);
    m["start_time"] = iso_now();
    return m;
}

void write_manifest(const json& m, const std::filesystem::path& dir) {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write manifest");
    out << m.dump(2) << '\n';
}

// correspondence file: one "source_index target_index" pair per line,
// covering every source point
void apply_correspondence(const std::string& path, PointCloud& source,
                          PointCloud& target) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open correspondence '" + path + "'");
    source.labels.assign(source.size(), -1);
    target.labels.assign(target.size(), -1);
    int si, ti, next_label = 0;
    while (in >> si >> ti) {
        if (si < 0 || si >= source.size() || ti < 0 || ti >= target.size())
            throw MissingCorrespondence("correspondence index out of range");
        source.labels[si] = next_label;
        target.labels[ti] = next_label;
        ++next_label;
    }
    if (!in.eof()) throw MissingCorrespondence("malformed correspondence file");
    for (int i = 0; i < source.size(); ++i)
        if (source.labels[i] < 0)
            throw MissingCorrespondence("source point " + std::to_string(i) +
                                        " has no correspondence");
    for (int j = 0; j < target.size(); ++j)
        if (target.labels[j] < 0) target.labels[j] = next_label++;
}

struct RunArtifacts {
    RegistrationOutcome outcome;
    DiagnosticsReport report;
};

RunArtifacts run_registration(const CommonArgs& a,
                              const std::filesystem::path& dir) {
    PointCloud source = load_pointcloud(a.source);
    PointCloud target = load_pointcloud(a.target);
    if (!a.correspondence.empty())
        apply_correspondence(a.correspondence, source, target);

    RunArtifacts r;
    r.outcome = register_clouds(source, target, a.cfg);
    save_net(r.outcome.theta_star, dir / "theta.json");
    write_loss_history_csv(r.outcome.history, dir / "loss_history.csv");

    const auto path = geodesic_path(r.outcome);
    std::filesystem::create_directories(dir / "frames");
    for (size_t l = 0; l < path.size(); ++l) {
        std::ostringstream name;
        name << "frame_" << std::setw(3) << std::setfill('0') << l
             << (source.has_faces() ? ".obj" : ".xyz");
        save_pointcloud(path[l], dir / "frames" / name.str());
    }

    r.report = compute_diagnostics(r.outcome, target);
    write_diagnostics_report(r.report, dir / "diagnostics.txt");
    return r;
}

int cmd_register(CommonArgs& a) {
    apply_config_file(a);
    finish_config(a);
    const std::filesystem::path dir(a.out);
    std::filesystem::create_directories(dir);
    json manifest = start_manifest("register", a);
    write_manifest(manifest, dir);

    const RunArtifacts r = run_registration(a, dir);

    manifest["end_time"] = iso_now();
    manifest["best_epoch"] = r.outcome.best_epoch;
    manifest["best_total_loss"] = r.outcome.history[r.outcome.best_epoch].total;
    manifest["normalization"] = {
        {"center", {r.outcome.norm.center.x(), r.outcome.norm.center.y(),
                    r.outcome.norm.center.z()}},
        {"scale", r.outcome.norm.scale}};
    write_manifest(manifest, dir);

    std::cout << "best epoch " << r.outcome.best_epoch << ", total loss "
              << r.outcome.history[r.outcome.best_epoch].total
              << ", min Jacobian det " << r.report.min_jacobian_det << '\n';
    if (r.report.tre_scene_units)
        std::cout << "TRE " << *r.report.tre_scene_units << " scene units\n";
    return 0;
}

int cmd_evaluate(const std::string& deformed_path, const std::string& target_path,
                 const std::string& corr_path, const std::string& csv_path) {
    PointCloud deformed = load_pointcloud(deformed_path);
    PointCloud target = load_pointcloud(target_path);
    if (!corr_path.empty()) {
        apply_correspondence(corr_path, deformed, target);
    } else {
        if (deformed.size() != target.size())
            throw MissingCorrespondence(
                "no correspondence file and cloud sizes differ");
        for (int i = 0; i < deformed.size(); ++i) {
            deformed.labels.push_back(i);
            target.labels.push_back(i);
        }
    }
    const double value = tre(deformed, target);
    std::cout << value << '\n';
    if (!csv_path.empty()) {
        std::ofstream csv(csv_path, std::ios::app);
        if (!csv) throw IoError("cannot append to '" + csv_path + "'");
        csv << deformed_path << ',' << target_path << ',' << value << '\n';
    }
    return 0;
}

int cmd_geodesic(const std::string& theta_path, const std::string& source_path,
                 const std::string& out_dir) {
    const NetParams net = load_net(theta_path);
    const PointCloud source = load_pointcloud(source_path);
    const FlowResult fr = flow_forward(source.points, net);
    export_flow_frames(fr, source,
                       out_dir, source.has_faces() ? CloudFormat::Obj
                                                   : CloudFormat::Xyz);
    std::cout << "wrote " << fr.shapes.size() << " frames to " << out_dir << '\n';
    return 0;
}

int cmd_diagnose(const std::string& theta_path, const std::string& source_path,
                 const std::string& target_path, const std::string& out_path) {
    const NetParams net = load_net(theta_path);
    const PointCloud source = load_pointcloud(source_path);
    const PointCloud target = load_pointcloud(target_path);
    // the stored network operates in whatever frame it was trained in; the
    // clouds are taken as already being in that frame
    RegistrationOutcome outcome;
    outcome.theta_star = net;
    outcome.source = source;
    outcome.prepared_source = source.points;
    outcome.final_flow = flow_forward(source.points, net);
    const DiagnosticsReport report = compute_diagnostics(outcome, target);
    write_diagnostics_report(report, out_path);
    std::cout << "C_theta " << report.C_theta << ", min Jacobian det "
              << report.min_jacobian_det << '\n';
    return 0;
}

int cmd_sweep(CommonArgs& a, const std::string& axis,
              const std::vector<std::string>& values) {
    if (values.empty()) {
        std::cerr << "sweep needs at least one value\n";
        return kExitArgs;
    }
    apply_config_file(a);
    const std::filesystem::path dir(a.out);
    std::filesystem::create_directories(dir);
    json manifest = start_manifest("sweep", a);
    manifest["axis"] = axis;
    manifest["values"] = values;
    write_manifest(manifest, dir);

    std::ofstream csv(dir / "sweep.csv");
    if (!csv) throw IoError("cannot write sweep CSV");
    csv << "value,best_total_loss,tre,C_theta,wall_seconds,status\n";
    csv.precision(17);

    int successes = 0;
    for (const std::string& value : values) {
        CommonArgs run = a;
        try {
            if (axis == "m") run.cfg.m = std::stoi(value);
            else if (axis == "sigma") run.cfg.objective.sigma = std::stod(value);
            else if (axis == "activation") run.activation = value;
            else throw InvalidConfig("unknown sweep axis '" + axis + "'");
            finish_config(run);
            run.out = (dir / ("run_" + value)).string();
            std::filesystem::create_directories(run.out);
            const RunArtifacts r = run_registration(run, run.out);
            csv << value << ','
                << r.outcome.history[r.outcome.best_epoch].total << ',';
            if (r.report.tre_scene_units) csv << *r.report.tre_scene_units;
            csv << ',' << r.report.C_theta << ',' << r.outcome.wall_seconds
                << ",ok\n";
            ++successes;
        } catch (const std::exception& e) {
            csv << value << ",,,,," << "failed: " << e.what() << '\n';
        }
        csv.flush();
    }
    manifest["end_time"] = iso_now();
    write_manifest(manifest, dir);
    return successes > 0 ? 0 : kExitDivergence;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ResNet-LDDMM diffeomorphic point-cloud registration"};
    app.require_subcommand(1);

    CommonArgs reg_args;
    CLI::App* reg = app.add_subcommand("register", "optimize a flow from source to target");
    add_register_flags(*reg, reg_args);
    reg_args.app = reg;

    std::string ev_deformed, ev_target, ev_corr, ev_csv;
    CLI::App* ev = app.add_subcommand("evaluate", "target registration error");
    ev->add_option("--deformed", ev_deformed)->required();
    ev->add_option("--target", ev_target)->required();
    ev->add_option("--correspondence", ev_corr);
    ev->add_option("--csv", ev_csv, "append a CSV row for sweep aggregation");

    std::string geo_theta, geo_source, geo_out = "frames";
    CLI::App* geo = app.add_subcommand("geodesic", "export flow frames for a trained network");
    geo->add_option("--theta", geo_theta)->required();
    geo->add_option("--source", geo_source)->required();
    geo->add_option("--out", geo_out);

    std::string dg_theta, dg_source, dg_target, dg_out = "diagnostics.txt";
    CLI::App* dg = app.add_subcommand("diagnose", "regularity report for a trained network");
    dg->add_option("--theta", dg_theta)->required();
    dg->add_option("--source", dg_source)->required();
    dg->add_option("--target", dg_target)->required();
    dg->add_option("--out", dg_out);

    CommonArgs sw_args;
    std::string sw_axis;
    std::vector<std::string> sw_values;
    CLI::App* sw = app.add_subcommand("sweep", "repeat register along one config axis");
    add_register_flags(*sw, sw_args);
    sw_args.app = sw;
    sw->add_option("--axis", sw_axis)->required()
        ->check(CLI::IsMember({"m", "activation", "sigma"}));
    sw->add_option("--values", sw_values, "axis values")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << e.what() << '\n' << app.help();
        return kExitArgs;
    }

    try {
        if (reg->parsed()) return cmd_register(reg_args);
        if (ev->parsed()) return cmd_evaluate(ev_deformed, ev_target, ev_corr, ev_csv);
        if (geo->parsed()) return cmd_geodesic(geo_theta, geo_source, geo_out);
        if (dg->parsed()) return cmd_diagnose(dg_theta, dg_source, dg_target, dg_out);
        if (sw->parsed()) return cmd_sweep(sw_args, sw_axis, sw_values);
    } catch (const MissingCorrespondence& e) {
        std::cerr << "correspondence error: " << e.what() << '\n';
        return kExitCorrespondence;
    } catch (const Divergence& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitIo;
    } catch (const InvalidConfig& e) {
        std::cerr << "bad arguments: " << e.what() << '\n';
        return kExitArgs;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return kExitArgs;
}
