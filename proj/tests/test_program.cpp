#include <filesystem>

#include "doctest.h"
#include "smrmc/program.hpp"

using namespace smrmc;

namespace {

std::string corpus(const std::string& name) { return std::string(SMRMC_CORPUS_DIR) + "/programs/" + name; }

std::vector<std::string> corpus_files() {
    std::vector<std::string> out;
    for (auto& e : std::filesystem::directory_iterator(std::string(SMRMC_CORPUS_DIR) + "/programs"))
        if (e.path().extension() == ".prog") out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

bool mentions(const std::vector<Diagnostic>& ds, const std::string& text) {
    for (auto& d : ds)
        if (d.message.find(text) != std::string::npos) return true;
    return false;
}

std::string wrap(const std::string& body, const std::string& head = "") {
    return "layout Node { data data; ptr next; }\nsmr api { retire(ptr); protect(ptr, int); }\n"
           "shared ptr ToS;\n" +
           head + "init { ToS = NULL; }\noperation op() {\n  local ptr p, q;\n  local data x, y;\n" + body + "\n}\n";
}

}  // namespace

TEST_CASE("corpus programs parse, validate and round trip") {
    auto files = corpus_files();
    REQUIRE(files.size() >= 11);
    for (auto& f : files) {
        auto p = load_program(f);
        for (std::string tags : {"", "H", "E", "G", "N"}) {
            auto ds = validate_program(p, tags);
            for (auto& d : ds) MESSAGE(f << " [" << tags << "] line " << d.line << ": " << d.message);
            CHECK(ds.empty());
        }
        auto q = parse_program(print_program(p));
        CHECK_MESSAGE(q == p, f);
    }
}

TEST_CASE("treiber's stack has push and pop with hazard pointer calls") {
    auto p = load_program(corpus("treiber.prog"));
    REQUIRE(p.operations.size() == 2);
    CHECK(p.operations[0].name == "push");
    CHECK(p.operations[1].name == "pop");
    for (auto f : {"protect", "unprotect", "retire"}) CHECK(p.smr_function(f));
    CHECK(p.smr_function("protect")->params == std::vector<VarType>{VarType::Ptr, VarType::Data});
    auto h = select_variant(p, "H");
    auto g = select_variant(p, "G");
    CHECK(print_program(h).find("protect(top, 0)") != std::string::npos);
    CHECK(print_program(g).find("protect(top") == std::string::npos);
    CHECK(print_program(g).find("retire(top)") != std::string::npos);
}

TEST_CASE("a program without operations keeps its init block") {
    auto p = parse_program("shared ptr ToS; init { ToS = NULL; }");
    CHECK(p.operations.empty());
    REQUIRE(p.init.size() == 1);
    CHECK(p.init[0].kind == Stmt::Kind::Assign);
    CHECK(validate_program(p).empty());
}

TEST_CASE("less-than parses to the comparison form") {
    auto p = parse_program(wrap("if (x < y) x = 1; assume(y > x);"));
    auto& body = p.operations[0].body;
    REQUIRE(body.size() == 4);
    CHECK(body[2].cond.kind == Cond::Kind::Lt);
    CHECK(body[2].cond.lhs == Expr::var("x"));
    CHECK(body[3].cond.kind == Cond::Kind::Lt);
    CHECK(body[3].cond.lhs == Expr::var("x"));
    CHECK(validate_program(p).empty());
    CHECK(mentions(validate_program(parse_program(wrap("assume(p < q);"))), "'<' on pointers"));
}

TEST_CASE("syntax errors carry line and column") {
    try {
        parse_program("shared ptr ToS;\ninit {\n  ToS = ;\n}");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line == 3);
        CHECK(e.column == 9);
    }
}

TEST_CASE("validation diagnostics") {
    CHECK(mentions(validate_program(parse_program(wrap("free(p);"))), "free outside SMR role"));
    CHECK(mentions(validate_program(parse_program(wrap("enter retire(p);"))), "without exit"));
    CHECK(mentions(validate_program(parse_program(wrap("exit;"))), "exit without enter"));
    CHECK(mentions(validate_program(parse_program(wrap("enter retire(p); p = q; exit;"))), "between enter and exit"));
    CHECK(validate_program(parse_program(wrap("enter retire(p); exit;"))).empty());
    CHECK(mentions(validate_program(parse_program(wrap("retire(p, q);"))), "expects 1 arguments"));
    CHECK(mentions(validate_program(parse_program(wrap("protect(x, 0);"))), "wrong type"));
    CHECK(mentions(validate_program(parse_program(wrap("z = p;"))), "unknown identifier 'z'"));
    CHECK(mentions(validate_program(parse_program(wrap("p = q.val;"))), "unknown selector"));
    CHECK(mentions(validate_program(parse_program(wrap("CAS(p, q, NULL);"))), "CAS target"));
    CHECK(validate_program(parse_program(wrap("CAS(p.next, q, NULL);"))).empty());
    CHECK(validate_program(parse_program(wrap("CAS(ToS, q, NULL);"))).empty());
    CHECK(mentions(validate_program(parse_program(wrap("break;"))), "outside a loop"));
    CHECK(mentions(validate_program(parse_program(wrap("x = p;"))), "assignment of ptr to data"));
    CHECK(mentions(validate_program(parse_program(wrap("if (p == x) skip;"))), "comparison between"));
    CHECK(mentions(validate_program(parse_program(wrap("x = x.data;"))), "dereference of non-pointer"));
    auto smr = parse_program("role smr; shared ptr P; init { } operation f() { lin f(); }");
    CHECK(mentions(validate_program(smr), "linearization annotation"));
    auto rec = parse_program("role smr; init { } operation f() { g(); } function g() { f(); }");
    CHECK(mentions(validate_program(rec), "recursive"));
}

TEST_CASE("tags select variants") {
    auto p = parse_program(wrap("@H protect(p, 0); @EG retire(p); x = 1;"));
    CHECK(select_variant(p, "H").operations[0].body.size() == 4);
    CHECK(select_variant(p, "E").operations[0].body.size() == 4);
    CHECK(select_variant(p, "N").operations[0].body.size() == 3);
    CHECK(select_variant(p, "HEG").operations[0].body.size() == 5);
    for (auto& s : select_variant(p, "H").operations[0].body) CHECK(s.tags.empty());
}
