#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kpbc/artifacts.hpp"
#include "kpbc/models.hpp"
#include "kpbc/scenario.hpp"
#include "kpbc/simulate.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace kpbc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

Matrix scalar(double a) {
    Matrix m(1, 1);
    m << a;
    return m;
}

struct TempDir {
    fs::path path;

    TempDir() {
        path = fs::temp_directory_path() /
               ("kpbc-test-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }

    static int& counter() {
        static int value = 0;
        return value;
    }
};

int run_cli(const std::string& args, const fs::path& capture) {
    const std::string cmd =
        std::string(KPBC_CLI_PATH) + " " + args + " > " + capture.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json base_scenario() {
    json doc;
    doc["schema"] = 1;
    doc["id"] = "zeta-kpbc";
    doc["model"] = {{"id", "zeta"},
                    {"params", {{"alpha1", 1.0}, {"alpha2", 1.0}, {"alpha3", 1.0},
                                {"v_star", 1.0 / 3.0}}}};
    doc["controller"] = {{"kind", "kpbc"}, {"K1", 1.0}, {"K2", 1.0}, {"K3", 1.0}};
    doc["initial_state"] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    doc["integrator"] = {{"method", "rk4"}, {"dt", 1e-3}, {"t_final", 2.0},
                         {"record_stride", 10}};
    doc["convergence"] = {{"anchor", "zeta-family"}, {"eps", 1e-3}, {"window", 1.0}};
    return doc;
}

fs::path write_scenario(const TempDir& dir, const json& doc, const char* name = "scenario.json") {
    const fs::path path = dir.path / name;
    std::ofstream out(path);
    out << doc.dump(2);
    return path;
}

}  // namespace

TEST_CASE("scenario parsing") {
    SUBCASE("valid document round trips") {
        const Scenario sc = parse_scenario(base_scenario());
        CHECK(sc.id == "zeta-kpbc");
        CHECK(sc.model_id == "zeta");
        CHECK(sc.controller_kind == "kpbc");
        CHECK(sc.integrator.t_final == 2.0);
        CHECK(sc.convergence.anchor == "zeta-family");
    }

    SUBCASE("unknown keys are rejected everywhere") {
        json doc = base_scenario();
        doc["extra"] = 1;
        CHECK_THROWS_AS(parse_scenario(doc), ValidationError);

        doc = base_scenario();
        doc["integrator"]["stepsize"] = 0.1;
        CHECK_THROWS_AS(parse_scenario(doc), ValidationError);

        doc = base_scenario();
        doc["controller"]["K9"] = 1.0;
        CHECK_THROWS_AS(parse_scenario(doc), ValidationError);
    }

    SUBCASE("schema version and id are required") {
        json doc = base_scenario();
        doc.erase("schema");
        CHECK_THROWS_AS(parse_scenario(doc), ValidationError);
        doc = base_scenario();
        doc["schema"] = 2;
        CHECK_THROWS_AS(parse_scenario(doc), ValidationError);
        doc = base_scenario();
        doc["id"] = "";
        CHECK_THROWS_AS(parse_scenario(doc), ValidationError);
    }

    SUBCASE("verification blocks validate their boxes") {
        json doc = base_scenario();
        doc["verification"] = json::array(
            {{{"property", "krasovskii"},
              {"lower", {0, 0, 0, 0, 0}},
              {"upper", {1, 1, 1, 1, 1}},
              {"samples", 0}}});
        CHECK_THROWS_AS(parse_scenario(doc), ValidationError);
    }

    SUBCASE("controller gains accept matrices") {
        json doc = base_scenario();
        doc["controller"]["K1"] = {{2.0}};
        const Scenario sc = parse_scenario(doc);
        CHECK(sc.gains.at("K1")(0, 0) == 2.0);
    }
}

TEST_CASE("trajectory CSV round trip") {
    const ZetaParams params;
    const auto loop = assemble_closed_loop(
        zeta_system(params), zeta_storage(params),
        make_kpbc_config(scalar(1), scalar(1), scalar(1), zeta_equilibrium(params).u_star));
    IntegratorConfig cfg;
    cfg.dt = 1e-3;
    cfg.t_final = 0.5;
    cfg.record_stride = 10;
    const Trajectory traj = simulate(loop, Vector::Zero(6), cfg);

    const TempDir dir;
    const fs::path csv = dir.path / "run.csv";
    write_trajectory_csv(csv.string(), traj);
    const CsvTable table = read_csv(csv.string());

    const std::vector<std::string> expected{"t",  "x1",   "x2", "x3", "x4", "u1",
                                            "uK1", "y1",  "y2_1", "y3", "S_K", "S1"};
    CHECK(table.header == expected);
    REQUIRE(table.columns.size() == expected.size());
    REQUIRE(table.columns[0].size() == traj.size());

    for (std::size_t k = 0; k < traj.size(); ++k) {
        CHECK(table.columns[0][k] == traj.t[k]);
        for (int i = 0; i < 4; ++i) {
            CHECK(table.columns[1 + static_cast<std::size_t>(i)][k] == traj.z[k][i]);
        }
        CHECK(table.columns[5][k] == traj.u_applied[k][0]);
        CHECK(table.columns[6][k] == traj.port[k][0]);
        CHECK(table.columns[7][k] == traj.y1[k]);
        CHECK(table.columns[8][k] == traj.y2[k][0]);
        CHECK(table.columns[9][k] == traj.y3[k]);
        CHECK(table.columns[10][k] == traj.storage_plant[k]);
        CHECK(table.columns[11][k] == traj.storage_total[k]);
    }
}

TEST_CASE("report and summary serialization") {
    RunSummary summary;
    summary.id = "demo";
    summary.converged = true;
    summary.t_converge = 12.5;
    summary.endpoint = Vector::Zero(2);
    summary.oscillation_count = 7;
    const json j = summary_to_json(summary);
    CHECK(j["id"] == "demo");
    CHECK(j["oscillation_count"] == 7);
    CHECK(j["endpoint"].size() == 2);

    PassivityReport report;
    report.property = "krasovskii";
    report.samples = 10;
    report.violations = 1;
    report.worst_margin = 0.25;
    report.tolerance = 1e-9;
    report.seed = 42;
    Witness w;
    w.point = Vector::Zero(3);
    w.margin = 0.25;
    w.index = 4;
    report.witnesses.push_back(w);
    const json r = report_to_json(report);
    CHECK(r["violations"] == 1);
    CHECK(r["witnesses"].size() == 1);
    CHECK(r["witnesses"][0]["index"] == 4);
}

TEST_CASE("cli simulate") {
    SUBCASE("writes trajectory, summary, and plot script") {
        const TempDir dir;
        json doc = base_scenario();
        doc["integrator"]["t_final"] = 60.0;
        doc["convergence"]["window"] = 10.0;
        const fs::path scenario = write_scenario(dir, doc);
        const int code = run_cli("simulate --scenario " + scenario.string() + " --out " +
                                     dir.path.string(),
                                 dir.path / "stdout.txt");
        CHECK(code == 0);
        CHECK(fs::exists(dir.path / "zeta-kpbc_trajectory.csv"));
        CHECK(fs::exists(dir.path / "zeta-kpbc_summary.json"));
        CHECK(fs::exists(dir.path / "zeta-kpbc_plot.py"));

        const json summary = json::parse(slurp(dir.path / "zeta-kpbc_summary.json"));
        CHECK(summary["converged"] == true);
        CHECK(summary.contains("oscillation_count"));
        CHECK(summary["error"] == "");

        const CsvTable table = read_csv((dir.path / "zeta-kpbc_trajectory.csv").string());
        const std::vector<std::string> expected{"t",  "x1",   "x2", "x3", "x4", "u1",
                                                "uK1", "y1",  "y2_1", "y3", "S_K", "S1"};
        CHECK(table.header == expected);

        const std::string plot = slurp(dir.path / "zeta-kpbc_plot.py");
        CHECK(plot.find("zeta-kpbc_trajectory.csv") != std::string::npos);
        CHECK(plot.find("matplotlib") != std::string::npos);

        // The generated script must at least be valid Python.
        if (std::system("python3 --version > /dev/null 2>&1") == 0) {
            const std::string compile = "python3 -m py_compile " +
                                        (dir.path / "zeta-kpbc_plot.py").string() +
                                        " > /dev/null 2>&1";
            CHECK(WEXITSTATUS(std::system(compile.c_str())) == 0);
        }
    }

    SUBCASE("identical scenario and seed give identical artifacts") {
        const TempDir dir;
        const fs::path scenario = write_scenario(dir, base_scenario());
        fs::create_directories(dir.path / "a");
        fs::create_directories(dir.path / "b");
        CHECK(run_cli("simulate --scenario " + scenario.string() + " --out " +
                          (dir.path / "a").string(),
                      dir.path / "out1.txt") == 0);
        CHECK(run_cli("simulate --scenario " + scenario.string() + " --out " +
                          (dir.path / "b").string(),
                      dir.path / "out2.txt") == 0);
        CHECK(slurp(dir.path / "a" / "zeta-kpbc_trajectory.csv") ==
              slurp(dir.path / "b" / "zeta-kpbc_trajectory.csv"));
        CHECK(slurp(dir.path / "a" / "zeta-kpbc_summary.json") ==
              slurp(dir.path / "b" / "zeta-kpbc_summary.json"));
    }

    SUBCASE("equilibrium start produces flat channels") {
        const TempDir dir;
        json doc = base_scenario();
        doc["id"] = "flat";
        doc["initial_state"] = {1.0 / 9, 1.0 / 3, 1.0 / 3, 1.0 / 3, 0.25, 0.0};
        const fs::path scenario = write_scenario(dir, doc);
        const int code = run_cli("simulate --scenario " + scenario.string() + " --out " +
                                     dir.path.string(),
                                 dir.path / "stdout.txt");
        CHECK(code == 0);
        const CsvTable table = read_csv((dir.path / "flat_trajectory.csv").string());
        for (std::size_t c = 1; c < table.columns.size(); ++c) {
            double spread = 0.0;
            for (double v : table.columns[c]) {
                spread = std::max(spread, std::abs(v - table.columns[c].front()));
            }
            CHECK(spread <= 1e-10);
        }
    }

    SUBCASE("malformed scenario exits 3 without artifacts") {
        const TempDir dir;
        json doc = base_scenario();
        doc["id"] = "bad";
        doc["integrator"]["stepsize"] = 0.1;
        const fs::path scenario = write_scenario(dir, doc);
        const int code = run_cli("simulate --scenario " + scenario.string() + " --out " +
                                     dir.path.string(),
                                 dir.path / "stdout.txt");
        CHECK(code == 3);
        CHECK_FALSE(fs::exists(dir.path / "bad_trajectory.csv"));
        CHECK_FALSE(fs::exists(dir.path / "bad_summary.json"));
    }

    SUBCASE("overrides change the horizon") {
        const TempDir dir;
        const fs::path scenario = write_scenario(dir, base_scenario());
        const int code = run_cli("simulate --scenario " + scenario.string() + " --out " +
                                     dir.path.string() + " --t-final 1.0 --dt 0.002",
                                 dir.path / "stdout.txt");
        CHECK(code == 0);
        const CsvTable table = read_csv((dir.path / "zeta-kpbc_trajectory.csv").string());
        CHECK(table.columns[0].back() == doctest::Approx(1.0));
    }

    SUBCASE("spbc scenario uses the v / S2 column names") {
        const TempDir dir;
        json doc = base_scenario();
        doc["id"] = "shifted";
        doc["controller"] = {{"kind", "spbc"}, {"K4", 1.0}, {"K5", 1.0}, {"K6", 1.0},
                             {"K7", 1.0}};
        doc["initial_state"] = {0.0, 0.0, 0.0, 0.0, 0.0};
        const fs::path scenario = write_scenario(dir, doc);
        const int code = run_cli("simulate --scenario " + scenario.string() + " --out " +
                                     dir.path.string(),
                                 dir.path / "stdout.txt");
        CHECK(code == 0);
        const CsvTable table = read_csv((dir.path / "shifted_trajectory.csv").string());
        const std::vector<std::string> expected{"t",  "x1",   "x2", "x3", "x4", "u1",
                                                "v1", "y1",  "y2_1", "y3", "S_K", "S2"};
        CHECK(table.header == expected);
    }

    SUBCASE("first-order controller scenario") {
        const TempDir dir;
        json doc = base_scenario();
        doc["id"] = "first-order";
        doc["controller"] = {{"kind", "kpbc1"}, {"K2", 1.0}, {"K3", 1.0}};
        doc["initial_state"] = {0.0, 0.0, 0.0, 0.0, 0.0};
        const fs::path scenario = write_scenario(dir, doc);
        const int code = run_cli("simulate --scenario " + scenario.string() + " --out " +
                                     dir.path.string(),
                                 dir.path / "stdout.txt");
        CHECK(code == 0);
        const CsvTable table = read_csv((dir.path / "first-order_trajectory.csv").string());
        CHECK(table.header[6] == "uK1");
        CHECK(table.header.back() == "S1");
    }

    SUBCASE("open-loop scenario omits the port and total-storage columns") {
        const TempDir dir;
        json doc = base_scenario();
        doc["id"] = "open";
        doc["controller"] = {{"kind", "open-loop"},
                             {"input", {{"kind", "constant"}, {"value", {0.25}}}}};
        doc["initial_state"] = {0.0, 0.0, 0.0, 0.0};
        const fs::path scenario = write_scenario(dir, doc);
        const int code = run_cli("simulate --scenario " + scenario.string() + " --out " +
                                     dir.path.string(),
                                 dir.path / "stdout.txt");
        CHECK(code == 0);
        const CsvTable table = read_csv((dir.path / "open_trajectory.csv").string());
        const std::vector<std::string> expected{"t", "x1", "x2", "x3", "x4", "u1",
                                                "y1", "y2_1", "y3", "S_K"};
        CHECK(table.header == expected);
    }

    SUBCASE("integration failure exits 2 and writes a partial summary") {
        const TempDir dir;
        json doc = base_scenario();
        doc["id"] = "stiff";
        doc["controller"] = {{"kind", "open-loop"},
                             {"input",
                              {{"kind", "sine"}, {"offset", {0.25}}, {"amplitude", {0.5}},
                               {"omega", 1000.0}}}};
        doc["initial_state"] = {0.0, 0.0, 0.0, 0.0};
        doc["integrator"] = {{"method", "rk45"}, {"dt", 0.5}, {"t_final", 5.0},
                             {"rel_tol", 1e-14}, {"abs_tol", 1e-16}, {"dt_min", 0.25},
                             {"dt_max", 1.0}};
        const fs::path scenario = write_scenario(dir, doc);
        const int code = run_cli("simulate --scenario " + scenario.string() + " --out " +
                                     dir.path.string(),
                                 dir.path / "stdout.txt");
        CHECK(code == 2);
        CHECK(fs::exists(dir.path / "stiff_summary.json"));
        const json summary = json::parse(slurp(dir.path / "stiff_summary.json"));
        CHECK(summary["error"].get<std::string>().find("underflow") != std::string::npos);
    }
}

TEST_CASE("cli verify") {
    SUBCASE("converter certificate block exits 0") {
        const TempDir dir;
        json doc = base_scenario();
        doc["id"] = "check";
        doc.erase("controller");
        doc.erase("initial_state");
        doc.erase("integrator");
        doc.erase("convergence");
        doc["verification"] = json::array(
            {{{"property", "krasovskii"},
              {"lower", {-0.5, -0.5, -0.5, -0.5, 0.0}},
              {"upper", {1.5, 1.5, 1.5, 1.5, 1.0}},
              {"samples", 5000},
              {"seed", 42},
              {"tolerance", 1e-9}}});
        const fs::path scenario = write_scenario(dir, doc);
        const int code = run_cli("verify --scenario " + scenario.string() + " --out " +
                                     dir.path.string(),
                                 dir.path / "stdout.txt");
        CHECK(code == 0);
        const json reports = json::parse(slurp(dir.path / "check_report.json"));
        REQUIRE(reports.size() == 1);
        CHECK(reports[0]["violations"] == 0);
        CHECK(reports[0]["seed"] == 42);
    }

    SUBCASE("cube-root differential block exits 4 with witnesses") {
        const TempDir dir;
        json doc;
        doc["schema"] = 1;
        doc["id"] = "impossible";
        doc["model"] = {{"id", "cuberoot"}};
        doc["verification"] = json::array(
            {{{"property", "differential"},
              {"lower", {0.1, 0.1, 0.1}},
              {"upper", {1.0, 1.0, 1.0}},
              {"samples", 2000},
              {"seed", 11},
              {"tolerance", 1e-9}}});
        const fs::path scenario = write_scenario(dir, doc);
        const int code = run_cli("verify --scenario " + scenario.string() + " --out " +
                                     dir.path.string(),
                                 dir.path / "stdout.txt");
        CHECK(code == 4);
        const json reports = json::parse(slurp(dir.path / "impossible_report.json"));
        CHECK(reports[0]["violations"].get<int>() > 0);
        CHECK(!reports[0]["witnesses"].empty());
    }

    SUBCASE("zero-sample block exits 3") {
        const TempDir dir;
        json doc;
        doc["schema"] = 1;
        doc["id"] = "empty";
        doc["model"] = {{"id", "cuberoot"}};
        doc["verification"] = json::array(
            {{{"property", "exactness"},
              {"lower", {0.1, 0.1}},
              {"upper", {1.0, 1.0}},
              {"samples", 0}}});
        const fs::path scenario = write_scenario(dir, doc);
        const int code = run_cli("verify --scenario " + scenario.string() + " --out " +
                                     dir.path.string(),
                                 dir.path / "stdout.txt");
        CHECK(code == 3);
    }

    SUBCASE("reports are identical under a KPBC_THREADS cap") {
        const TempDir dir;
        json doc = base_scenario();
        doc["id"] = "capped";
        doc.erase("controller");
        doc.erase("initial_state");
        doc["verification"] = json::array(
            {{{"property", "krasovskii"},
              {"lower", {-0.5, -0.5, -0.5, -0.5, 0.0}},
              {"upper", {1.5, 1.5, 1.5, 1.5, 1.0}},
              {"samples", 5000},
              {"seed", 7}}});
        const fs::path scenario = write_scenario(dir, doc);
        fs::create_directories(dir.path / "a");
        fs::create_directories(dir.path / "b");
        CHECK(run_cli("verify --scenario " + scenario.string() + " --out " +
                          (dir.path / "a").string(),
                      dir.path / "out1.txt") == 0);
        const std::string capped = "KPBC_THREADS=1 " + std::string(KPBC_CLI_PATH) +
                                   " verify --scenario " + scenario.string() + " --out " +
                                   (dir.path / "b").string() + " > " +
                                   (dir.path / "out2.txt").string() + " 2>&1";
        REQUIRE(std::system(capped.c_str()) != -1);
        CHECK(slurp(dir.path / "a" / "capped_report.json") ==
              slurp(dir.path / "b" / "capped_report.json"));
    }

    SUBCASE("missing verification blocks exit 3") {
        const TempDir dir;
        const fs::path scenario = write_scenario(dir, base_scenario());
        const int code = run_cli("verify --scenario " + scenario.string() + " --out " +
                                     dir.path.string(),
                                 dir.path / "stdout.txt");
        CHECK(code == 3);
    }
}

TEST_CASE("cli equilibrium") {
    const TempDir dir;

    SUBCASE("zeta closed form") {
        const fs::path capture = dir.path / "eq.txt";
        const int code = run_cli("equilibrium --model zeta --vstar 0.3333333333333333",
                                 capture);
        CHECK(code == 0);
        const json out = json::parse(slurp(capture));
        CHECK(out["x_star"][0].get<double>() == doctest::Approx(1.0 / 9).epsilon(1e-12));
        CHECK(out["u_star"][0].get<double>() == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(out["residual"].get<double>() <= 1e-15);
    }

    SUBCASE("linear preset lands at the origin") {
        const fs::path capture = dir.path / "lin.txt";
        const int code = run_cli("equilibrium --model linear:scalar --x0 5.0", capture);
        CHECK(code == 0);
        const json out = json::parse(slurp(capture));
        CHECK(std::abs(out["x_star"][0].get<double>()) <= 1e-10);
    }

    SUBCASE("bad model id exits 3") {
        CHECK(run_cli("equilibrium --model boost", dir.path / "bad.txt") == 3);
    }
}
