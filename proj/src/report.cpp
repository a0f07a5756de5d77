#include "smrmc/report.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace smrmc {

using nlohmann::json;

namespace {

const char* kind_name(Action::Kind k) {
    switch (k) {
        case Action::Kind::Start: return "start";
        case Action::Kind::Step: return "step";
        case Action::Kind::Free: return "free";
        case Action::Kind::Init: return "init";
    }
    return "?";
}

Action::Kind parse_kind(const std::string& s) {
    if (s == "start") return Action::Kind::Start;
    if (s == "step") return Action::Kind::Step;
    if (s == "free") return Action::Kind::Free;
    if (s == "init") return Action::Kind::Init;
    throw std::runtime_error("unknown action kind '" + s + "'");
}

json witness_json(const Witness& w) {
    json trace = json::array(), hist = json::array();
    for (auto& a : w.trace) trace.push_back({{"kind", kind_name(a.kind)}, {"thread", a.thread}, {"choice", a.choice}});
    for (auto& e : w.history) hist.push_back({{"event", e.kind}, {"args", e.args}});
    return {{"kind", w.kind}, {"detail", w.detail}, {"op", w.op}, {"line", w.line}, {"trace", trace}, {"history", hist}};
}

Witness parse_witness(const json& j) {
    Witness w;
    w.kind = j.at("kind").get<std::string>();
    w.detail = j.at("detail").get<std::string>();
    w.op = j.at("op").get<std::string>();
    w.line = j.at("line").get<int>();
    for (auto& a : j.at("trace"))
        w.trace.push_back({parse_kind(a.at("kind").get<std::string>()), a.at("thread").get<int>(), a.at("choice").get<int>()});
    for (auto& e : j.at("history")) w.history.push_back({e.at("event").get<std::string>(), e.at("args").get<std::vector<Value>>()});
    return w;
}

}  // namespace

std::string print_report(const Report& r) {
    json ws = json::array();
    for (auto& w : r.witnesses) ws.push_back(witness_json(w));
    json j = {{"tool", r.tool},         {"version", r.version},   {"command", r.command},   {"inputs", r.inputs},
              {"digests", r.digests},   {"options", r.options},   {"bounds", r.bounds},     {"verdict", r.verdict},
              {"counters", r.counters}, {"witnesses", ws},        {"timings", r.timings}};
    return j.dump(2) + "\n";
}

Report parse_report(const std::string& text) {
    try {
        json j = json::parse(text);
        Report r;
        r.tool = j.at("tool").get<std::string>();
        r.version = j.at("version").get<std::string>();
        r.command = j.at("command").get<std::string>();
        r.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
        r.digests = j.at("digests").get<std::map<std::string, std::string>>();
        r.options = j.at("options").get<std::map<std::string, std::string>>();
        r.bounds = j.at("bounds").get<std::map<std::string, int64_t>>();
        r.verdict = j.at("verdict").get<std::string>();
        r.counters = j.at("counters").get<std::map<std::string, int64_t>>();
        for (auto& w : j.at("witnesses")) r.witnesses.push_back(parse_witness(w));
        r.timings = j.at("timings").get<std::map<std::string, double>>();
        return r;
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed report: ") + e.what());
    }
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string data = ss.str();
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr))
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

}  // namespace smrmc
