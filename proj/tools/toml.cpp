#include "toml.hpp"

#include <charconv>
#include <sstream>

#include "coat/core.hpp"
#include "coat/errors.hpp"

namespace coat::tools {

namespace {

class LineParser {
public:
    LineParser(std::string_view s, int line) : s_(s), line_(line) {}

    [[noreturn]] void fail(const std::string& why) const {
        throw ConfigError("config line " + std::to_string(line_) + ": " + why);
    }
    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }
    bool at_end_or_comment() {
        skip_ws();
        return pos_ >= s_.size() || s_[pos_] == '#';
    }
    char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
    void expect(char c) {
        skip_ws();
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    std::string key() {
        skip_ws();
        if (peek() == '"' || peek() == '\'') return string();
        const auto start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '-'))
            ++pos_;
        if (pos_ == start) fail("expected a key");
        return std::string(s_.substr(start, pos_ - start));
    }

    std::vector<std::string> dotted_key() {
        std::vector<std::string> parts{key()};
        skip_ws();
        while (peek() == '.') {
            ++pos_;
            parts.push_back(key());
            skip_ws();
        }
        return parts;
    }

    std::string string() {
        const char q = s_[pos_++];
        std::string out;
        while (pos_ < s_.size() && s_[pos_] != q) {
            char c = s_[pos_++];
            if (q == '"' && c == '\\') {
                if (pos_ >= s_.size()) fail("dangling escape");
                switch (const char e = s_[pos_++]) {
                    case 'n': c = '\n'; break;
                    case 't': c = '\t'; break;
                    case '"': c = '"'; break;
                    case '\\': c = '\\'; break;
                    default: fail(std::string("unsupported escape \\") + e);
                }
            }
            out += c;
        }
        if (pos_ >= s_.size()) fail("unterminated string");
        ++pos_;
        return out;
    }

    nlohmann::json value() {
        skip_ws();
        const char c = peek();
        if (c == '"' || c == '\'') return string();
        if (c == '[') {
            ++pos_;
            nlohmann::json arr = nlohmann::json::array();
            skip_ws();
            if (peek() == ']') {
                ++pos_;
                return arr;
            }
            while (true) {
                arr.push_back(value());
                skip_ws();
                if (peek() == ',') {
                    ++pos_;
                    skip_ws();
                    if (peek() == ']') {
                        ++pos_;
                        return arr;
                    }
                    continue;
                }
                if (peek() == ']') {
                    ++pos_;
                    return arr;
                }
                fail("expected ',' or ']' in array");
            }
        }
        const auto start = pos_;
        while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' && s_[pos_] != ' ' &&
               s_[pos_] != '\t')
            ++pos_;
        std::string tok(s_.substr(start, pos_ - start));
        if (tok == "true") return true;
        if (tok == "false") return false;
        std::erase(tok, '_');
        if (tok.empty()) fail("missing value");
        long long i = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), i);
        if (ec == std::errc() && p == tok.data() + tok.size()) return i;
        std::istringstream in(tok);
        double d = 0;
        in >> d;
        if (!in.fail() && in.eof()) return d;
        fail("cannot read value \"" + tok + "\"");
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
    int line_;
};

nlohmann::json& descend(nlohmann::json& root, const std::vector<std::string>& path, LineParser& lp) {
    nlohmann::json* cur = &root;
    for (const auto& p : path) {
        auto& next = (*cur)[p];
        if (next.is_null()) next = nlohmann::json::object();
        if (!next.is_object()) lp.fail("\"" + p + "\" is already a value, not a table");
        cur = &next;
    }
    return *cur;
}

}  // namespace

nlohmann::json parse_toml(std::string_view text) {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        LineParser lp(raw, line_no);
        if (lp.at_end_or_comment()) continue;
        if (lp.peek() == '[') {
            lp.expect('[');
            if (lp.peek() == '[') lp.fail("arrays of tables are not supported");
            const auto path = lp.dotted_key();
            lp.expect(']');
            if (!lp.at_end_or_comment()) lp.fail("trailing text after table header");
            table = &descend(root, path, lp);
            continue;
        }
        auto path = lp.dotted_key();
        lp.expect('=');
        auto v = lp.value();
        if (!lp.at_end_or_comment()) lp.fail("trailing text after value");
        const std::string last = path.back();
        path.pop_back();
        auto& dest = descend(*table, path, lp);
        if (dest.contains(last)) lp.fail("duplicate key \"" + last + "\"");
        dest[last] = std::move(v);
    }
    return root;
}

nlohmann::json load_toml(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    return parse_toml(text);
}

}  // namespace coat::tools
