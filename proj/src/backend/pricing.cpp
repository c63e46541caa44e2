#include "neuroagent/backend/pricing.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace neuroagent::backend {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_price(const std::string& s, const std::string& line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad price '" + s + "' in line: " + line);
    }
}

}  // namespace

void PriceTable::set(const std::string& model, Price price) {
    if (!(price.input >= 0.0) || !(price.output >= 0.0) || !std::isfinite(price.input) ||
        !std::isfinite(price.output))
        throw ConfigError("prices for " + model + " must be finite and non-negative");
    prices_[model] = price;
}

const Price& PriceTable::at(const std::string& model) const {
    auto it = prices_.find(model);
    if (it == prices_.end()) throw ConfigError("no price for model '" + model + "'");
    return it->second;
}

PriceTable PriceTable::parse(const std::string& text) {
    PriceTable t;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value: " + s);
        const std::string key = trim(s.substr(0, eq));
        if (key.rfind("price.", 0) != 0) continue;
        const std::string value = trim(s.substr(eq + 1));
        const auto comma = value.find(',');
        if (comma == std::string::npos) throw ConfigError("expected '<input>, <output>' in line: " + s);
        t.set(key.substr(6), {parse_price(trim(value.substr(0, comma)), s),
                              parse_price(trim(value.substr(comma + 1)), s)});
    }
    return t;
}

PriceTable PriceTable::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read price table " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

PriceTable PriceTable::defaults() {
    PriceTable t;
    t.set("gpt-5.1", {125.0, 1000.0});
    t.set("gpt-5-mini", {25.0, 200.0});
    t.set("claude-sonnet-4.5", {300.0, 1500.0});
    t.set("gemini-2.5-pro", {125.0, 1000.0});
    t.set("scripted", {0.0, 0.0});
    t.set("planner", {0.0, 0.0});
    return t;
}

double cost_cents(std::int64_t tokens_in, std::int64_t tokens_out, const std::string& model, const PriceTable& table) {
    const Price& p = table.at(model);
    return static_cast<double>(tokens_in) * p.input / 1e6 + static_cast<double>(tokens_out) * p.output / 1e6;
}

}  // namespace neuroagent::backend
