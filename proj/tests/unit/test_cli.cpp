#include "common.hpp"

#include "tensegrity/cli.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace tensegrity;

namespace {

struct Out {
    int code = 0;
    std::string out, err;
};

Out cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "tensegrity");
    std::vector<const char*> argv;
    for (auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string temp(const std::string& name)
{
    return (std::filesystem::temp_directory_path() / ("tensegrity_test_" + name)).string();
}

}  // namespace

TEST(Cli, RunAllFixtures)
{
    for (const char* f : {"three_cells.script", "triplex.script", "triplex_place.script", "icosahedron.script"}) {
        const auto r = cli({"run", testutil::fixture(f).string(), "-o", temp(std::string(f) + ".json")});
        EXPECT_EQ(r.code, 0) << f << "\n" << r.err;
        EXPECT_NE(r.out.find("dim_w"), std::string::npos);
    }
}

TEST(Cli, CheckAcceptsAndRejects)
{
    const auto path = temp("check.json");
    ASSERT_EQ(cli({"run", testutil::fixture("three_cells.script").string(), "-o", path, "-q"}).code, 0);
    auto r = cli({"check", path});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("ok"), std::string::npos);

    auto j = nlohmann::json::parse(read_file(path));
    j["basis"][1][3] = j["basis"][1][3].get<double>() + 0.25;
    write_file(path, j.dump());
    r = cli({"check", path});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE((r.out + r.err).find("equilibrium"), std::string::npos);

    write_file(path, "{\"format\": \"tensegrity-structure\"");
    EXPECT_EQ(cli({"check", path}).code, 1);
}

TEST(Cli, StressSurfaceExport)
{
    const auto path = temp("tri.json");
    ASSERT_EQ(cli({"run", testutil::fixture("triplex.script").string(), "-o", path, "-q"}).code, 0);
    auto r = cli({"stress", path});
    EXPECT_EQ(r.code, 0) << r.err;
    r = cli({"export", path, "--obj", temp("tri.obj")});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(read_file(temp("tri.obj")).find("g struts"), std::string::npos);

    const auto pre = temp("pre.json");
    auto script = read_file(testutil::fixture("triplex.script"));
    script = script.substr(0, script.find("fuse"));
    write_file(temp("pre.script"), script);
    ASSERT_EQ(cli({"run", temp("pre.script"), "-o", pre, "-q"}).code, 0);
    r = cli({"surface", pre, "--fuse", "2-4,3-5", "--count", "5"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(nlohmann::json::parse(r.out).at("kind"), "quadric");
}

TEST(Cli, ExitCodes)
{
    EXPECT_EQ(cli({}).code, 2);
    EXPECT_EQ(cli({"--help"}).code, 0);
    EXPECT_EQ(cli({"bogus"}).code, 2);
    EXPECT_EQ(cli({"run", "/nonexistent.script"}).code, 1);
    write_file(temp("bad.script"), "node 1 0 0\n");
    auto r = cli({"run", temp("bad.script")});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("line 1"), std::string::npos);
}
