#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "cbct/io.hpp"
#include "cbct/pipeline.hpp"

using namespace cbct;
namespace fs = std::filesystem;

namespace {

struct Sandbox {
    fs::path dir;
    Sandbox()
    {
        std::random_device rd;
        dir = fs::temp_directory_path() / ("cbct-cli-" + std::to_string(rd()));
        fs::create_directories(dir);
    }
    ~Sandbox() { fs::remove_all(dir); }
    Sandbox(const Sandbox&) = delete;
    Sandbox& operator=(const Sandbox&) = delete;

    std::string at(const std::string& name) const { return (dir / name).string(); }

    /// Runs the tool with stdout and stderr captured; returns the exit status.
    int run(const std::string& args, std::string* out = nullptr, std::string* err = nullptr) const
    {
        const std::string command = std::string("\"") + CBCT_CLI_PATH + "\" " + args + " > \"" + at("stdout") +
                                    "\" 2> \"" + at("stderr") + "\"";
        const int status = std::system(command.c_str());
        if (out)
            *out = slurp("stdout");
        if (err)
            *err = slurp("stderr");
        return status;
    }

    std::string slurp(const std::string& name) const
    {
        std::ifstream in(at(name), std::ios::binary);
        std::stringstream s;
        s << in.rdbuf();
        return s.str();
    }
};

std::size_t line_count(const std::string& text)
{
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("cli: plan prints the hand-derived split count")
{
    Sandbox box;
    std::string out;
    REQUIRE(box.run("plan --size 512 --detector 512 --angles 360 --device mem=256MiB", &out) == 0);
    CHECK(out.find("n_splits=3\n") != std::string::npos);
    REQUIRE(box.run("plan --op backward --size 512 --detector 512 --angles 360 --device mem=256MiB", &out) == 0);
    CHECK(out.find("n_splits=3\n") != std::string::npos);
}

TEST_CASE("cli: simulate emits one line per trace event")
{
    Sandbox box;
    std::string out;
    REQUIRE(box.run("simulate --size 64 --angles 90 --splits 2 --device mem=1GiB --device mem=1GiB", &out) == 0);
    const ScanGeometry g = standard_geometry(64, 96, 96, 90);
    DeviceSpec spec;
    spec.memory_budget = kGiB;
    const DevicePool pool = DevicePool::uniform(2, spec);
    PlanOptions o;
    o.forced_splits = 2;
    const ExecutionTrace t = simulate(plan_forward(g, pool, {}, o), g, pool);
    CHECK(line_count(out) == t.events.size());
    std::istringstream lines(out);
    std::string first;
    std::getline(lines, first);
    CHECK(format_event(parse_event(first)) == first);
}

TEST_CASE("cli: phantom, project and fdk recon produce readable files")
{
    Sandbox box;
    REQUIRE(box.run("phantom --kind cylinder --size 24 --angles 40 -o " + box.at("v.meta") + " --geometry-out " +
                    box.at("g.meta")) == 0);
    REQUIRE(box.run("project -i " + box.at("v.meta") + " --geometry " + box.at("g.meta") + " -o " +
                    box.at("p.meta") + " --trace " + box.at("trace.txt")) == 0);
    REQUIRE(box.run("recon --algorithm fdk -i " + box.at("p.meta") + " -o " + box.at("r.meta")) == 0);
    const Volume r = read_volume(box.at("r.meta"));
    CHECK(r.grid.n_x == 24);
    CHECK(r.data.abs().maxCoeff() > 0.0f);
    CHECK(read_projections(box.at("p.meta")).geometry.has_value());
    CHECK(line_count(box.slurp("trace.txt")) > 0);

    REQUIRE(box.run("recon --algorithm ossart --iterations 2 --block-size 10 --tv rof --tv-iters 4 -i " +
                    box.at("p.meta") + " -o " + box.at("s.meta") + " --residuals " + box.at("res.txt")) == 0);
    CHECK(line_count(box.slurp("res.txt")) == 2);
    CHECK(box.slurp("res.txt").rfind("iter=1 residual=", 0) == 0);
}

TEST_CASE("cli: runs are reproducible under a seed")
{
    Sandbox box;
    for (const char* name : {"a", "b"})
        REQUIRE(box.run(std::string("phantom --kind blocks --size 16 --noise 0.1 --seed 7 -o ") +
                        box.at(std::string(name) + ".meta")) == 0);
    CHECK(box.slurp("a.raw") == box.slurp("b.raw"));
    REQUIRE(box.run("phantom --kind blocks --size 16 --noise 0.1 --seed 8 -o " + box.at("c.meta")) == 0);
    CHECK(box.slurp("a.raw") != box.slurp("c.raw"));
}

TEST_CASE("cli: invalid input gives one diagnostic line and no output file")
{
    Sandbox box;
    std::string err;
    CHECK(box.run("plan --device mem=lots", nullptr, &err) != 0);
    CHECK(line_count(err) == 1);
    CHECK(err.rfind("cbct: error: ", 0) == 0);

    CHECK(box.run("project -i " + box.at("missing.meta") + " -o " + box.at("p.meta"), nullptr, &err) != 0);
    CHECK(line_count(err) == 1);
    CHECK_FALSE(fs::exists(box.dir / "p.meta"));
    CHECK_FALSE(fs::exists(box.dir / "p.raw"));

    CHECK(box.run("recon --bogus", nullptr, &err) != 0);
    CHECK(line_count(err) == 1);

    REQUIRE(box.run("phantom --size 8 -o " + box.at("v.meta")) == 0);
    CHECK(box.run("project --device mem=1KiB -i " + box.at("v.meta") + " -o " + box.at("q.meta"), nullptr, &err) !=
          0);
    CHECK(line_count(err) == 1);
    CHECK_FALSE(fs::exists(box.dir / "q.meta"));
}
