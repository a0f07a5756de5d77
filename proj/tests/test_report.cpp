#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "smrmc/report.hpp"

using namespace smrmc;

TEST_CASE("report round trip") {
    Report r;
    r.command = "verify-ds";
    r.inputs["program"] = "treiber.prog";
    r.digests["program"] = std::string(64, 'a');
    r.options = {{"smr", "hp"}, {"mode", "one"}};
    r.bounds = {{"threads", 2}, {"ops", 2}, {"max_states", 0}};
    r.verdict = "violation";
    r.counters = {{"states", 75806}, {"harmful_aba", 1}};
    Witness w;
    w.kind = "harmful-aba";
    w.detail = "ABA at \"push\"\nnext line";
    w.op = "push";
    w.line = 18;
    w.trace = {{Action::Kind::Init, -1, 1}, {Action::Kind::Start, 0, 0}, {Action::Kind::Step, 1, 2},
               {Action::Kind::Free, -1, 3}};
    w.history = {{"retire", {0, 2}}, {"exit", {0}}, {"free", {2}}};
    r.witnesses = {w, Witness{}};
    r.timings = {{"total", 0.1234567890123}, {"explore", 1e-9}};
    CHECK(parse_report(print_report(r)) == r);
    CHECK(parse_report(print_report(Report{})) == Report{});
}

TEST_CASE("malformed reports are rejected") {
    CHECK_THROWS(parse_report("{"));
    CHECK_THROWS(parse_report("{}"));
    auto text = print_report(Report{});
    auto pos = text.find("\"witnesses\": []");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 15, "\"witnesses\": [{\"kind\": 1}]");
    CHECK_THROWS(parse_report(text));
}

TEST_CASE("file digests") {
    std::string path = "smrmc_digest_test.txt";
    {
        std::ofstream out(path);
        out << "abc";
    }
    CHECK(sha256_file(path) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    std::remove(path.c_str());
    CHECK_THROWS(sha256_file(path));
}
