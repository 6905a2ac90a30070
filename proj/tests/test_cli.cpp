#include <sflock/cli.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sflock;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test
{
  protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() /
               ("sflock_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::create_directories(dir_);
        unsetenv("SF_THREADS");
        unsetenv("SF_SEED");
    }
    void TearDown() override
    {
        fs::remove_all(dir_);
        unsetenv("SF_THREADS");
        unsetenv("SF_SEED");
    }

    std::string path(const std::string &name) const { return (dir_ / name).string(); }

    std::string write_json(const std::string &name, const json &j) const
    {
        std::ofstream(path(name)) << j.dump(2);
        return path(name);
    }

    static std::string slurp(const std::string &p)
    {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    int run(std::vector<std::string> args)
    {
        args.insert(args.begin(), "sflock");
        std::vector<char *> argv;
        for (std::string &a : args)
            argv.push_back(a.data());
        out_.str("");
        err_.str("");
        return cli_main(static_cast<int>(argv.size()), argv.data(), out_, err_);
    }

    json box_run(const std::string &tag) const
    {
        RunConfig c;
        c.scenario.name = "box";
        c.scenario.n = 24;
        c.scenario.d = 2;
        c.scenario.alpha = 2.0;
        c.scenario.delta = 0.05;
        c.scenario.t_end = 2.0;
        c.scenario.seed = 17;
        c.scenario.velocity_scale = 0.5;
        c.scenario.init = UniformBox{8.0};
        c.outputs.diagnostics = path(tag + "_diag.csv");
        c.outputs.events = path(tag + "_events.csv");
        c.outputs.trajectory = path(tag + "_traj.csv");
        return to_json(c);
    }

    fs::path dir_;
    std::ostringstream out_;
    std::ostringstream err_;
};

} // namespace

TEST_F(Cli, SimulateWritesOutputsAndVerifies)
{
    const std::string cfg = write_json("run.json", box_run("a"));
    ASSERT_EQ(run({"simulate", cfg}), kExitOk) << err_.str();
    const json summary = json::parse(out_.str());
    EXPECT_EQ(summary.at("exit_reason"), "Completed");
    EXPECT_GT(summary.at("n_steps").get<long>(), 0);
    const DiagnosticsFile diag = read_diagnostics(path("a_diag.csv"));
    EXPECT_EQ(metadata_value(diag.meta, "seed"), "17");
    EXPECT_DOUBLE_EQ(diag.records.back().t, 2.0);
    EXPECT_TRUE(read_events(path("a_events.csv")).empty());

    ASSERT_EQ(run({"verify", path("a_traj.csv")}), kExitOk) << out_.str() << err_.str();
    EXPECT_NE(out_.str().find("verify: all checks passed"), std::string::npos);
    EXPECT_EQ(run({"verify", path("a_traj.csv"), "--speed-tol", "-1"}), kExitCheckFailed);
}

TEST_F(Cli, SameSeedGivesIdenticalFilesAndThreadsDoNotMatter)
{
    const std::string a = write_json("a.json", box_run("a"));
    const std::string b = write_json("b.json", box_run("b"));
    ASSERT_EQ(run({"simulate", a}), kExitOk);
    setenv("SF_THREADS", "4", 1);
    ASSERT_EQ(run({"simulate", b}), kExitOk);
    EXPECT_EQ(slurp(path("a_diag.csv")), slurp(path("b_diag.csv")));
    EXPECT_EQ(slurp(path("a_traj.csv")), slurp(path("b_traj.csv")));
}

TEST_F(Cli, SeedOverrideFromEnvironment)
{
    const std::string a = write_json("a.json", box_run("a"));
    setenv("SF_SEED", "5", 1);
    ASSERT_EQ(run({"simulate", a}), kExitOk);
    EXPECT_EQ(metadata_value(read_diagnostics(path("a_diag.csv")).meta, "seed"), "5");
    setenv("SF_SEED", "five", 1);
    EXPECT_EQ(run({"simulate", a}), kExitUsage);
    EXPECT_NE(err_.str().find("SF_SEED"), std::string::npos);
    unsetenv("SF_SEED");
    setenv("SF_THREADS", "0", 1);
    EXPECT_EQ(run({"simulate", a}), kExitUsage);
}

TEST_F(Cli, TwoBodyAboveThresholdCompletes)
{
    json j = box_run("t");
    j["scenario"]["n"] = 2;
    j["scenario"]["d"] = 1;
    j["scenario"]["alpha"] = 1.0;
    j["scenario"]["delta"] = 0.0;
    j["scenario"]["init"] = {{"kind", "TwoBody"}, {"r0", 1.0}, {"w0", -4.0}};
    ASSERT_EQ(run({"simulate", write_json("t.json", j)}), kExitOk) << err_.str();
    EXPECT_GT(read_diagnostics(path("t_diag.csv")).records.back().min_gap, 0.0);
}

TEST_F(Cli, SubcriticalTwoBodyCollides)
{
    json j = box_run("c");
    j["scenario"]["n"] = 2;
    j["scenario"]["d"] = 1;
    j["scenario"]["alpha"] = 0.5;
    j["scenario"]["delta"] = 0.0;
    j["scenario"]["init"] = {{"kind", "TwoBody"}, {"r0", 1.0}, {"w0", -4.0}};
    EXPECT_EQ(run({"simulate", write_json("c.json", j)}), kExitCollision);
    const std::vector<EventRecord> ev = read_events(path("c_events.csv"));
    ASSERT_FALSE(ev.empty());
    EXPECT_EQ(ev.back().kind, EventKind::Collision);
}

TEST_F(Cli, ProbeReportsCollision)
{
    ProbeConfig p;
    p.alpha = 0.5;
    p.r0 = 1.0;
    p.w0 = -4.0;
    p.report = path("report.json");
    p.events = path("probe_events.csv");
    EXPECT_EQ(run({"probe", write_json("p.json", to_json(p))}), kExitCollision) << err_.str();
    const json rep = json::parse(slurp(path("report.json")));
    EXPECT_TRUE(rep.at("collided").get<bool>());
    EXPECT_LT(rep.at("time_rel_error").get<double>(), 1e-4);
    EXPECT_FALSE(read_events(path("probe_events.csv")).empty());

    p.w0 = 1.0;
    EXPECT_EQ(run({"probe", write_json("q.json", to_json(p))}), kExitOk) << err_.str();
    EXPECT_FALSE(json::parse(slurp(path("report.json"))).at("collided").get<bool>());
}

TEST_F(Cli, SweepWritesTable)
{
    SweepConfig s;
    s.sweep.base.n = 4;
    s.sweep.base.d = 2;
    s.sweep.base.alpha = 3.0;
    s.sweep.base.delta = 0.1;
    s.sweep.base.t_end = 1.0;
    s.sweep.base.velocity_scale = 0.5;
    s.sweep.base.init = UniformBox{2.5};
    s.sweep.values = {4, 8, 16};
    s.table = path("table.csv");
    ASSERT_EQ(run({"sweep", write_json("s.json", to_json(s))}), kExitOk) << out_.str() << err_.str();
    const std::string table = slurp(path("table.csv"));
    EXPECT_NE(table.find("N,replicate,seed,L0,kinetic0,sup_L,bound_rhs,min_gap,n_steps,exit,failed,message\n"),
              std::string::npos);
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'),
              std::count(table.begin(), table.end(), '#') + 4);
}

TEST_F(Cli, FlockCheck)
{
    json j = box_run("f");
    j["scenario"]["n"] = 4;
    j["scenario"]["velocity_scale"] = 0.01;
    j["scenario"]["init"] = {{"kind", "Lattice"}, {"spacing", 0.5}};
    EXPECT_EQ(run({"flock-check", write_json("f.json", j)}), kExitOk) << err_.str();
    EXPECT_TRUE(json::parse(out_.str()).at("holds").get<bool>());
    j["scenario"]["velocity_scale"] = 100.0;
    EXPECT_EQ(run({"flock-check", write_json("g.json", j)}), kExitCheckFailed) << err_.str();
    j["scenario"]["alpha"] = 1.0;
    EXPECT_EQ(run({"flock-check", write_json("h.json", j)}), kExitOk) << err_.str();
    EXPECT_EQ(json::parse(out_.str()).at("margin"), "inf");
}

TEST_F(Cli, MalformedConfigNamesLocation)
{
    std::ofstream(path("bad.json")) << "{\n  \"scenario\": {\n    \"n\": 2,,\n  }\n}\n";
    EXPECT_EQ(run({"simulate", path("bad.json")}), kExitUsage);
    EXPECT_NE(err_.str().find("line 3"), std::string::npos) << err_.str();
}

TEST_F(Cli, UnknownFieldIsNamed)
{
    json j = box_run("u");
    j["integrator"]["rtol"] = 1e-6;
    EXPECT_EQ(run({"simulate", write_json("u.json", j)}), kExitUsage);
    EXPECT_NE(err_.str().find("integrator.rtol"), std::string::npos) << err_.str();
}

TEST_F(Cli, UsageAndVersion)
{
    EXPECT_EQ(run({}), kExitUsage);
    EXPECT_EQ(run({"launch"}), kExitUsage);
    EXPECT_EQ(run({"simulate"}), kExitUsage);
    EXPECT_EQ(run({"simulate", path("missing.json")}), kExitUsage);
    EXPECT_EQ(run({"--version"}), kExitOk);
    EXPECT_EQ(out_.str(), std::string(kToolVersion) + "\n");
    EXPECT_EQ(run({"--help"}), kExitOk);
    EXPECT_NE(out_.str().find("flock-check"), std::string::npos);
}

TEST_F(Cli, VerifyNeedsMetadata)
{
    write_trajectory(path("bare.csv"), {}, {ParticleState(0.0, 1, {0.0, 1.0}, {0.0, 0.0})});
    EXPECT_EQ(run({"verify", path("bare.csv")}), kExitUsage);
    EXPECT_NE(err_.str().find("alpha"), std::string::npos);
}
