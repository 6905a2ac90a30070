#include <sflock/config.hpp>
#include <sflock/io.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sflock;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test
{
  protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() /
               ("sflock_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    std::string path(const std::string &name) const { return (dir_ / name).string(); }

    static std::string slurp(const std::string &p)
    {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    static void spit(const std::string &p, const std::string &text)
    {
        std::ofstream out(p, std::ios::binary);
        out << text;
    }

    fs::path dir_;
};

using Io = TempDir;
using Config = TempDir;

DiagnosticsRecord awkward_record(double t)
{
    DiagnosticsRecord r;
    r.t = t;
    r.min_gap = 0.1 + 0.2;
    r.max_speed = 1.0 / 3.0;
    r.kinetic = std::nextafter(1.0, 2.0);
    r.dissipation_integral = 1e-300;
    r.L_beta = 123456789.123456789;
    r.log_functional = -std::numbers::pi;
    r.vel_diam_inf = 5e-324;
    r.pos_diam_inf = 1.7976931348623157e308;
    return r;
}

} // namespace

TEST(Format, SeventeenDigitsRoundTrip)
{
    for (const double x : {0.1, 1.0 / 3.0, -2.5e-310, 6.02214076e23, std::nextafter(1.0, 0.0)})
        EXPECT_EQ(std::strtod(format_double(x).c_str(), nullptr), x);
}

TEST_F(Io, DiagnosticsHeaderAndBitExactRoundTrip)
{
    const std::vector<DiagnosticsRecord> recs{awkward_record(0.0), awkward_record(0.5)};
    const Metadata meta{{"tool", kToolVersion}, {"seed", "42"}};
    write_diagnostics(path("d.csv"), meta, recs);
    const std::string text = slurp(path("d.csv"));
    EXPECT_NE(text.find("# tool=sflock"), std::string::npos);
    EXPECT_NE(text.find("\nt,min_gap,max_speed,kinetic,dissipation_integral,L_beta,log_functional,vel_diam_inf,pos_diam_inf\n"),
              std::string::npos);
    const DiagnosticsFile back = read_diagnostics(path("d.csv"));
    EXPECT_EQ(back.meta, meta);
    ASSERT_EQ(back.records.size(), 2u);
    for (std::size_t s = 0; s < 2; ++s)
    {
        EXPECT_EQ(back.records[s].t, recs[s].t);
        EXPECT_EQ(back.records[s].min_gap, recs[s].min_gap);
        EXPECT_EQ(back.records[s].max_speed, recs[s].max_speed);
        EXPECT_EQ(back.records[s].kinetic, recs[s].kinetic);
        EXPECT_EQ(back.records[s].dissipation_integral, recs[s].dissipation_integral);
        EXPECT_EQ(back.records[s].L_beta, recs[s].L_beta);
        EXPECT_EQ(back.records[s].log_functional, recs[s].log_functional);
        EXPECT_EQ(back.records[s].vel_diam_inf, recs[s].vel_diam_inf);
        EXPECT_EQ(back.records[s].pos_diam_inf, recs[s].pos_diam_inf);
    }
}

TEST_F(Io, DiagnosticsRejectsEmptyStreamAndBadFiles)
{
    EXPECT_THROW(write_diagnostics(path("e.csv"), {}, {}), IoError);
    EXPECT_THROW(write_diagnostics((dir_ / "missing" / "x.csv").string(), {}, {awkward_record(0)}), IoError);
    EXPECT_THROW(read_diagnostics(path("nope.csv")), IoError);
    spit(path("bad.csv"), "t,min_gap\n0,1\n");
    EXPECT_THROW(read_diagnostics(path("bad.csv")), IoError);
    write_diagnostics(path("ok.csv"), {}, {awkward_record(0)});
    std::string text = slurp(path("ok.csv"));
    text += "1,2,3\n";
    spit(path("short.csv"), text);
    try
    {
        read_diagnostics(path("short.csv"));
        FAIL();
    }
    catch (const IoError &e)
    {
        EXPECT_NE(std::string(e.what()).find("short.csv"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST_F(Io, TrajectoryRoundTrip)
{
    ParticleState a(0.0, 3, {0.1, 0.2, 0.3, 1.0, 1.0, 1.0}, {1.0 / 3.0, 0.0, -1.0, 2.0, 3.0, 4.0});
    ParticleState b = a;
    b.t = 0.125;
    b.x[4] = 1e-17;
    write_trajectory(path("t.csv"), {{"alpha", "2"}}, {a, b});
    const std::string text = slurp(path("t.csv"));
    EXPECT_NE(text.find("t,x0_0,x0_1,x0_2,x1_0,x1_1,x1_2,v0_0,v0_1,v0_2,v1_0,v1_1,v1_2\n"), std::string::npos);
    const TrajectoryFile back = read_trajectory(path("t.csv"));
    ASSERT_EQ(back.states.size(), 2u);
    EXPECT_EQ(back.states[0], a);
    EXPECT_EQ(back.states[1], b);
    EXPECT_EQ(metadata_value(back.meta, "alpha"), "2");
    EXPECT_EQ(metadata_value(back.meta, "beta", "none"), "none");
}

TEST_F(Io, TrajectoryRejectsShapeChangeAndBadHeader)
{
    const ParticleState a(0.0, 1, {0.0, 1.0}, {0.0, 0.0});
    const ParticleState b(0.0, 1, {0.0, 1.0, 2.0}, {0.0, 0.0, 0.0});
    EXPECT_THROW(write_trajectory(path("t.csv"), {}, {a, b}), IoError);
    EXPECT_THROW(write_trajectory(path("t.csv"), {}, {}), IoError);
    spit(path("h.csv"), "t,x0_0,x1_0,v0_0,w1_0\n0,0,1,0,0\n");
    EXPECT_THROW(read_trajectory(path("h.csv")), IoError);
    spit(path("n.csv"), "t,x0_0,x1_0,v0_0,v1_0\n0,0,abc,0,0\n");
    EXPECT_THROW(read_trajectory(path("n.csv")), IoError);
}

TEST_F(Io, EventsRoundTrip)
{
    const std::vector<EventRecord> evs{{0.25, EventKind::NearCollision, 0, 1, 1e-7, 0.5, -0.5},
                                       {0.3, EventKind::Collision, 0, 1, 1e-9, 2.0, -2.0},
                                       {0.3, EventKind::Sticking, 2, 5, 1e-10, 1e-8, 0.0},
                                       {0.4, EventKind::StepFloor, 3, 4, 0.1, 1.0, -1.0}};
    write_events(path("e.csv"), {}, evs);
    EXPECT_NE(slurp(path("e.csv")).find("time,kind,i,j,gap,rel_speed,closing_velocity\n"), std::string::npos);
    const std::vector<EventRecord> back = read_events(path("e.csv"));
    ASSERT_EQ(back.size(), evs.size());
    for (std::size_t e = 0; e < evs.size(); ++e)
    {
        EXPECT_EQ(back[e].kind, evs[e].kind);
        EXPECT_EQ(back[e].time, evs[e].time);
        EXPECT_EQ(back[e].i, evs[e].i);
        EXPECT_EQ(back[e].j, evs[e].j);
        EXPECT_EQ(back[e].gap, evs[e].gap);
    }
    write_events(path("none.csv"), {}, {});
    EXPECT_TRUE(read_events(path("none.csv")).empty());
}

TEST_F(Config, RunConfigRoundTrip)
{
    RunConfig c;
    c.scenario.name = "box";
    c.scenario.n = 12;
    c.scenario.d = 3;
    c.scenario.alpha = 2.5;
    c.scenario.delta = 0.1;
    c.scenario.t_end = 4.0;
    c.scenario.seed = 0xFFFFFFFFFFFFFFFFULL;
    c.scenario.init = UniformBox{3.5};
    c.integrator.rel_tol = 1e-9;
    c.integrator.threads = 3;
    c.outputs.trajectory = "traj.csv";
    c.sample_every = 4;
    EXPECT_EQ(run_config_from_json(json::parse(to_json(c).dump())), c);
    for (const InitSpec &init : {InitSpec{Lattice{0.7}}, InitSpec{CustomFile{"x.csv"}}})
    {
        c.scenario.init = init;
        EXPECT_EQ(run_config_from_json(to_json(c)), c);
    }
    c.scenario.n = 2;
    c.scenario.init = TwoBody{1.0, -3.0};
    EXPECT_EQ(run_config_from_json(to_json(c)), c);
}

TEST_F(Config, SweepAndProbeRoundTrip)
{
    SweepConfig s;
    s.sweep.base.alpha = 3.0;
    s.sweep.base.n = 4;
    s.sweep.values = {4, 8, 16};
    s.sweep.replicates = 2;
    s.gronwall_C = 1.5;
    s.table = "table.csv";
    EXPECT_EQ(sweep_config_from_json(json::parse(to_json(s).dump())), s);
    s.sweep.axis = SweepAxis::VelocityScale;
    EXPECT_EQ(sweep_config_from_json(to_json(s)), s);

    ProbeConfig p;
    p.alpha = 0.3;
    p.w0 = -7.0;
    p.events = "ev.csv";
    EXPECT_EQ(probe_config_from_json(json::parse(to_json(p).dump())), p);
}

TEST_F(Config, ErrorsNameTheField)
{
    auto message = [](const std::string &text) {
        try
        {
            run_config_from_json(json::parse(text));
        }
        catch (const ConfigError &e)
        {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_NE(message(R"({"scenario":{"n":2,"d":1,"alpha":1,"t_end":1,"init":{"kind":"UniformBox","side":2},"colour":1}})")
                  .find("scenario.colour"),
              std::string::npos);
    EXPECT_NE(message(R"({"scenario":{"n":2,"d":1,"t_end":1,"init":{"kind":"UniformBox","side":2}}})").find("scenario.alpha"),
              std::string::npos);
    EXPECT_NE(message(R"({"scenario":{"n":"two","d":1,"alpha":1,"t_end":1,"init":{"kind":"UniformBox","side":2}}})")
                  .find("scenario.n"),
              std::string::npos);
    EXPECT_NE(message(R"({"scenario":{"n":2,"d":1,"alpha":1,"t_end":1,"init":{"kind":"Blob"}}})").find("scenario.init.kind"),
              std::string::npos);
    EXPECT_NE(message(R"({"scenario":{"n":2,"d":1,"alpha":1,"t_end":1,"init":{"kind":"UniformBox","side":2}},"integrator":{"rel_tol":-1}})")
                  .find("integrator"),
              std::string::npos);
    EXPECT_NE(message(R"({"scenario":{"n":2,"d":1,"alpha":-1,"t_end":1,"init":{"kind":"UniformBox","side":2}}})").find("alpha"),
              std::string::npos);
    EXPECT_NE(message(R"({"sample_every":0,"scenario":{"n":2,"d":1,"alpha":1,"t_end":1,"init":{"kind":"UniformBox","side":2}}})")
                  .find("sample_every"),
              std::string::npos);
}

TEST_F(Config, MalformedFileReportsLine)
{
    spit(path("bad.json"), "{\n  \"scenario\": {\n    \"n\": 2,,\n  }\n}\n");
    try
    {
        load_json_file(path("bad.json"));
        FAIL();
    }
    catch (const ConfigError &e)
    {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("bad.json"), std::string::npos);
    }
    EXPECT_THROW(load_json_file(path("absent.json")), ConfigError);
}

TEST(Metadata, RecordsRerunParameters)
{
    ScenarioSpec s;
    s.seed = 99;
    s.alpha = 1.5;
    const Metadata m = run_metadata(s, IntegratorConfig{});
    for (const char *key : {"tool", "seed", "alpha", "delta", "N", "d", "rel_tol", "abs_tol", "rng"})
        EXPECT_FALSE(metadata_value(m, key).empty()) << key;
    EXPECT_EQ(metadata_value(m, "seed"), "99");
    EXPECT_EQ(metadata_value(m, "rng"), "mt19937_64");
}
