#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "neuroagent/agent/tokens.hpp"

namespace neuroagent::backend {

using agent::estimate_tokens;
using agent::estimate_tokens_for_bytes;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Cents per one million tokens.
struct Price {
    double input = 0.0;
    double output = 0.0;
};

class PriceTable {
public:
    // Throws ConfigError for negative or non-finite prices.
    void set(const std::string& model, Price price);
    bool contains(const std::string& model) const { return prices_.count(model) > 0; }
    // Throws ConfigError for unknown models.
    const Price& at(const std::string& model) const;
    const std::map<std::string, Price>& entries() const { return prices_; }

    // Parses `price.<model> = <input>, <output>` lines of a flat config text;
    // other keys, blank lines and '#' comments are ignored.
    static PriceTable parse(const std::string& text);
    static PriceTable load(const std::string& path);
    // List prices of a few hosted models plus zero-cost offline backends.
    static PriceTable defaults();

private:
    std::map<std::string, Price> prices_;
};

double cost_cents(std::int64_t tokens_in, std::int64_t tokens_out, const std::string& model, const PriceTable& table);

}  // namespace neuroagent::backend
