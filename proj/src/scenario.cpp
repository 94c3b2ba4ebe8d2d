#include "kpbc/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace kpbc {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const char* where, const std::set<std::string>& allowed) {
    for (const auto& item : obj.items()) {
        if (!allowed.count(item.key())) {
            throw ValidationError(std::string("unknown key in ") + where + ": " + item.key());
        }
    }
}

double as_number(const json& j, const char* what) {
    if (!j.is_number()) {
        throw ValidationError(std::string(what) + " must be a number");
    }
    return j.get<double>();
}

std::int64_t as_integer(const json& j, const char* what) {
    if (!j.is_number_integer()) {
        throw ValidationError(std::string(what) + " must be an integer");
    }
    return j.get<std::int64_t>();
}

Vector as_vector(const json& j, const char* what) {
    if (!j.is_array()) {
        throw ValidationError(std::string(what) + " must be an array of numbers");
    }
    Vector v(j.size());
    Eigen::Index i = 0;
    for (const auto& item : j) {
        v[i++] = as_number(item, what);
    }
    return v;
}

Matrix as_gain(const json& j, const char* what) {
    if (j.is_number()) {
        Matrix k(1, 1);
        k << j.get<double>();
        return k;
    }
    if (!j.is_array() || j.empty()) {
        throw ValidationError(std::string(what) + " must be a number or a matrix");
    }
    const std::size_t rows = j.size();
    std::size_t cols = 0;
    Matrix k;
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array()) {
            throw ValidationError(std::string(what) + " rows must be arrays");
        }
        if (r == 0) {
            cols = j[r].size();
            k.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        }
        if (j[r].size() != cols) {
            throw ValidationError(std::string(what) + " rows have unequal lengths");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            k(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                as_number(j[r][c], what);
        }
    }
    return k;
}

SignalSpec parse_signal(const json& j, const char* where) {
    reject_unknown(j, where, {"kind", "value", "offset", "amplitude", "omega", "phase"});
    SignalSpec spec;
    if (j.contains("kind")) {
        spec.kind = j["kind"].get<std::string>();
    }
    if (spec.kind != "zero" && spec.kind != "constant" && spec.kind != "sine") {
        throw ValidationError(std::string(where) + ": unknown signal kind " + spec.kind);
    }
    if (j.contains("value")) spec.value = as_vector(j["value"], "signal value");
    if (j.contains("offset")) spec.offset = as_vector(j["offset"], "signal offset");
    if (j.contains("amplitude")) spec.amplitude = as_vector(j["amplitude"], "signal amplitude");
    if (j.contains("omega")) spec.omega = as_number(j["omega"], "signal omega");
    if (j.contains("phase")) spec.phase = as_number(j["phase"], "signal phase");
    if (spec.kind == "constant" && spec.value.size() == 0) {
        throw ValidationError(std::string(where) + ": constant signal requires value");
    }
    if (spec.kind == "sine" && spec.amplitude.size() == 0) {
        throw ValidationError(std::string(where) + ": sine signal requires amplitude");
    }
    return spec;
}

}  // namespace

TimeSignal SignalSpec::to_signal(int dim) const {
    if (kind == "zero") {
        return zero_signal(dim);
    }
    if (kind == "constant") {
        Vector v = value;
        if (v.size() != dim) {
            throw ValidationError("constant signal has wrong dimension");
        }
        return [v](double) { return v; };
    }
    Vector off = offset.size() == 0 ? Vector::Zero(dim) : offset;
    Vector amp = amplitude;
    if (off.size() != dim || amp.size() != dim) {
        throw ValidationError("sine signal has wrong dimension");
    }
    const double w = omega;
    const double ph = phase;
    return [off, amp, w, ph](double t) -> Vector {
        return off + amp * std::sin(w * t + ph);
    };
}

TimeSignal SignalSpec::to_derivative(int dim) const {
    if (kind == "zero" || kind == "constant") {
        return zero_signal(dim);
    }
    Vector amp = amplitude;
    if (amp.size() != dim) {
        throw ValidationError("sine signal has wrong dimension");
    }
    const double w = omega;
    const double ph = phase;
    return [amp, w, ph](double t) -> Vector { return amp * (w * std::cos(w * t + ph)); };
}

Scenario parse_scenario(const json& doc) {
    if (!doc.is_object()) {
        throw ValidationError("scenario must be a JSON object");
    }
    reject_unknown(doc, "scenario",
                   {"schema", "id", "model", "controller", "initial_state", "integrator",
                    "convergence", "verification", "output_dir"});

    Scenario sc;
    if (!doc.contains("schema") || !doc["schema"].is_number_integer()) {
        throw ValidationError("scenario requires an integer schema field");
    }
    sc.schema = doc["schema"].get<int>();
    if (sc.schema != 1) {
        throw ValidationError("unsupported scenario schema version");
    }
    if (!doc.contains("id") || !doc["id"].is_string() || doc["id"].get<std::string>().empty()) {
        throw ValidationError("scenario requires a nonempty id");
    }
    sc.id = doc["id"].get<std::string>();

    if (!doc.contains("model") || !doc["model"].is_object()) {
        throw ValidationError("scenario requires a model object");
    }
    reject_unknown(doc["model"], "model", {"id", "params"});
    if (!doc["model"].contains("id") || !doc["model"]["id"].is_string()) {
        throw ValidationError("model requires an id");
    }
    sc.model_id = doc["model"]["id"].get<std::string>();
    sc.model_params =
        doc["model"].contains("params") ? doc["model"]["params"] : json::object();

    if (doc.contains("controller")) {
        const json& ctl = doc["controller"];
        reject_unknown(ctl, "controller",
                       {"kind", "K1", "K2", "K3", "K4", "K5", "K6", "K7", "u_star", "nu",
                        "input"});
        if (!ctl.contains("kind") || !ctl["kind"].is_string()) {
            throw ValidationError("controller requires a kind");
        }
        sc.controller_kind = ctl["kind"].get<std::string>();
        if (sc.controller_kind != "kpbc" && sc.controller_kind != "kpbc1" &&
            sc.controller_kind != "spbc" && sc.controller_kind != "open-loop") {
            throw ValidationError("unknown controller kind: " + sc.controller_kind);
        }
        for (const char* name : {"K1", "K2", "K3", "K4", "K5", "K6", "K7"}) {
            if (ctl.contains(name)) {
                sc.gains[name] = as_gain(ctl[name], name);
            }
        }
        if (ctl.contains("u_star")) {
            sc.u_star = as_vector(ctl["u_star"], "u_star");
        }
        if (ctl.contains("nu")) {
            sc.nu = parse_signal(ctl["nu"], "controller.nu");
        }
        if (ctl.contains("input")) {
            sc.input = parse_signal(ctl["input"], "controller.input");
        }
    }

    if (doc.contains("initial_state")) {
        sc.initial_state = as_vector(doc["initial_state"], "initial_state");
    }

    if (doc.contains("integrator")) {
        const json& integ = doc["integrator"];
        reject_unknown(integ, "integrator",
                       {"method", "dt", "t_final", "record_stride", "rel_tol", "abs_tol",
                        "dt_min", "dt_max"});
        if (integ.contains("method")) {
            const std::string method = integ["method"].get<std::string>();
            if (method == "rk4") {
                sc.integrator.method = IntegrationMethod::RK4;
            } else if (method == "rk45") {
                sc.integrator.method = IntegrationMethod::RK45;
            } else {
                throw ValidationError("unknown integrator method: " + method);
            }
        }
        if (integ.contains("dt")) sc.integrator.dt = as_number(integ["dt"], "dt");
        if (integ.contains("t_final"))
            sc.integrator.t_final = as_number(integ["t_final"], "t_final");
        if (integ.contains("record_stride"))
            sc.integrator.record_stride =
                static_cast<int>(as_integer(integ["record_stride"], "record_stride"));
        if (integ.contains("rel_tol")) sc.integrator.rel_tol = as_number(integ["rel_tol"], "rel_tol");
        if (integ.contains("abs_tol")) sc.integrator.abs_tol = as_number(integ["abs_tol"], "abs_tol");
        if (integ.contains("dt_min")) sc.integrator.dt_min = as_number(integ["dt_min"], "dt_min");
        if (integ.contains("dt_max")) sc.integrator.dt_max = as_number(integ["dt_max"], "dt_max");
        sc.integrator.validate();
    }

    if (doc.contains("convergence")) {
        const json& conv = doc["convergence"];
        reject_unknown(conv, "convergence", {"anchor", "point", "eps", "window", "tag_tol"});
        if (conv.contains("anchor")) {
            sc.convergence.anchor = conv["anchor"].get<std::string>();
            if (sc.convergence.anchor != "point" && sc.convergence.anchor != "zeta-family") {
                throw ValidationError("unknown convergence anchor: " + sc.convergence.anchor);
            }
        }
        if (conv.contains("point")) {
            sc.convergence.point = as_vector(conv["point"], "convergence point");
        }
        if (conv.contains("eps")) sc.convergence.eps = as_number(conv["eps"], "eps");
        if (conv.contains("window")) sc.convergence.window = as_number(conv["window"], "window");
        if (conv.contains("tag_tol"))
            sc.convergence.tag_tol = as_number(conv["tag_tol"], "tag_tol");
        if (sc.convergence.eps <= 0.0 || sc.convergence.window < 0.0) {
            throw ValidationError("convergence requires eps > 0 and window >= 0");
        }
    }

    if (doc.contains("verification")) {
        if (!doc["verification"].is_array()) {
            throw ValidationError("verification must be an array of blocks");
        }
        for (const json& block : doc["verification"]) {
            reject_unknown(block, "verification block",
                           {"property", "lower", "upper", "samples", "seed", "tolerance",
                            "strategy", "segments", "metric"});
            VerificationBlock vb;
            if (!block.contains("property") || !block["property"].is_string()) {
                throw ValidationError("verification block requires a property");
            }
            vb.property = block["property"].get<std::string>();
            static const std::set<std::string> known{"krasovskii", "differential", "shifted",
                                                     "incremental", "exactness"};
            if (!known.count(vb.property)) {
                throw ValidationError("unknown verification property: " + vb.property);
            }
            if (!block.contains("lower") || !block.contains("upper")) {
                throw ValidationError("verification block requires lower/upper bounds");
            }
            vb.box.lower = as_vector(block["lower"], "lower");
            vb.box.upper = as_vector(block["upper"], "upper");
            if (block.contains("samples")) {
                vb.box.count = as_integer(block["samples"], "samples");
            }
            if (block.contains("seed")) {
                vb.box.seed = static_cast<std::uint64_t>(as_integer(block["seed"], "seed"));
            }
            if (block.contains("tolerance")) {
                vb.tolerance = as_number(block["tolerance"], "tolerance");
            }
            if (block.contains("strategy")) {
                const std::string strategy = block["strategy"].get<std::string>();
                if (strategy == "uniform") {
                    vb.box.strategy = SampleStrategy::UniformRandom;
                } else if (strategy == "grid") {
                    vb.box.strategy = SampleStrategy::Grid;
                } else {
                    throw ValidationError("unknown sampling strategy: " + strategy);
                }
            }
            if (block.contains("segments")) {
                vb.segments = static_cast<int>(as_integer(block["segments"], "segments"));
            }
            if (block.contains("metric")) {
                vb.metric = as_gain(block["metric"], "metric");
            }
            try {
                vb.box.validate();
            } catch (const ContractViolation& err) {
                throw ValidationError(std::string("invalid verification block: ") + err.what());
            }
            sc.verification.push_back(std::move(vb));
        }
    }

    if (doc.contains("output_dir")) {
        sc.output_dir = doc["output_dir"].get<std::string>();
    }
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open scenario file: " + path);
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& err) {
        throw ValidationError(std::string("scenario is not valid JSON: ") + err.what());
    }
    return parse_scenario(doc);
}

ModelBundle scenario_model(const Scenario& scenario) {
    return make_model(scenario.model_id, scenario.model_params);
}

namespace {

Matrix required_gain(const Scenario& sc, const char* name) {
    const auto it = sc.gains.find(name);
    if (it == sc.gains.end()) {
        throw ValidationError(std::string("controller kind ") + sc.controller_kind +
                              " requires gain " + name);
    }
    return it->second;
}

}  // namespace

ClosedLoopSystem build_closed_loop(const Scenario& scenario, const ModelBundle& model) {
    if (scenario.controller_kind.empty()) {
        throw ValidationError("scenario has no controller");
    }
    const int m = model.system.input_dim;
    const Vector u_star = scenario.u_star ? *scenario.u_star : model.anchor.u_star;
    if (u_star.size() != m) {
        throw ValidationError("u_star has wrong dimension");
    }

    try {
        if (scenario.controller_kind == "kpbc") {
            auto cfg = make_kpbc_config(required_gain(scenario, "K1"),
                                        required_gain(scenario, "K2"),
                                        required_gain(scenario, "K3"), u_star,
                                        scenario.nu.to_signal(m));
            return assemble_closed_loop(model.system, model.storage, cfg);
        }
        if (scenario.controller_kind == "kpbc1") {
            auto cfg = make_kpbc1_config(required_gain(scenario, "K2"),
                                         required_gain(scenario, "K3"), u_star,
                                         scenario.nu.to_signal(m));
            return assemble_closed_loop(model.system, model.storage, cfg);
        }
        if (scenario.controller_kind == "spbc") {
            auto cfg = make_spbc_config(required_gain(scenario, "K4"),
                                        required_gain(scenario, "K5"),
                                        required_gain(scenario, "K6"),
                                        required_gain(scenario, "K7"), u_star,
                                        scenario.nu.to_signal(m));
            return assemble_closed_loop(model.system, model.storage, cfg);
        }
        InputSignal input{scenario.input.to_signal(m), scenario.input.to_derivative(m)};
        return open_loop(model.system, model.storage, std::move(input));
    } catch (const ConfigError& err) {
        throw ValidationError(std::string("invalid controller configuration: ") + err.what());
    }
}

AnchorSet build_anchor(const Scenario& scenario, const ModelBundle& model) {
    if (scenario.convergence.anchor == "zeta-family") {
        if (!model.zeta_alpha3) {
            throw ValidationError("zeta-family anchor requires the zeta model");
        }
        return AnchorSet::zeta_family(*model.zeta_alpha3);
    }
    Vector point =
        scenario.convergence.point ? *scenario.convergence.point : model.anchor.x_star;
    if (point.size() != model.system.state_dim) {
        throw ValidationError("convergence point has wrong dimension");
    }
    return AnchorSet::point(std::move(point));
}

PassivityReport run_verification_block(const VerificationBlock& block, const ModelBundle& model,
                                       int workers) {
    const InputAffineSystem& sys = model.system;
    const Matrix metric = block.metric ? *block.metric : model.metric;

    if (block.property == "krasovskii") {
        if (block.metric) {
            const KrasovskiiStorage storage =
                KrasovskiiStorage::canonical(sys, metric, model.anchor);
            return verify_krasovskii(sys, storage, block.box, block.tolerance, nullptr, workers);
        }
        return verify_krasovskii(sys, model.storage, block.box, block.tolerance,
                                 model.krasovskii_output_map, workers);
    }
    if (block.property == "differential") {
        InputAffineSystem plant = sys;
        Matrix m = metric;
        const DifferentialStorage dstorage = DifferentialStorage::constant(
            metric, [plant, m](const Vector& x) -> Matrix {
                return plant.input_matrix(x).transpose() * m;
            });
        return verify_differential(sys, dstorage, block.box, block.tolerance, workers);
    }
    if (block.property == "shifted") {
        const ShiftedStorage sstorage =
            shifted_storage_from_krasovskii(sys, model.storage, model.anchor);
        return verify_shifted(sys, sstorage, block.box, block.tolerance, workers);
    }
    if (block.property == "incremental") {
        return verify_incremental(sys, metric, block.box, block.tolerance, block.segments,
                                  workers);
    }
    if (block.property == "exactness") {
        return check_exactness(sys, metric, block.box, block.tolerance, workers);
    }
    throw ValidationError("unknown verification property: " + block.property);
}

}  // namespace kpbc
