// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include "dot_check.hpp"

#include <cctype>
#include <stdexcept>

namespace relatape::testing {

namespace {

struct Token {
    enum Kind { Id, Punct, End } kind = End;
    std::string text;
    bool quoted = false;
};

class DotParser {
public:
    DotParser(const std::string& s, DotGraph& g) : s_(s), g_(g) { advance(); }

    void graph() {
        if (is_keyword("strict")) advance();
        if (is_keyword("digraph")) g_.directed = true;
        else if (!is_keyword("graph")) fail("expected graph or digraph");
        advance();
        if (tok_.kind == Token::Id) advance();
        expect("{");
        stmt_list("");
        expect("}");
        if (tok_.kind != Token::End) fail("trailing text");
    }

private:
    [[noreturn]] void fail(const std::string& msg) {
        throw std::runtime_error(msg + " at offset " + std::to_string(pos_) + " near '" + tok_.text + "'");
    }

    bool is_keyword(const char* kw) const {
        if (tok_.kind != Token::Id || tok_.quoted) return false;
        std::string lower;
        for (char c : tok_.text) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return lower == kw;
    }
    bool is_punct(const char* p) const { return tok_.kind == Token::Punct && tok_.text == p; }
    void expect(const char* p) {
        if (!is_punct(p)) fail(std::string("expected '") + p + "'");
        advance();
    }

    void skip_space() {
        for (;;) {
            while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            if (s_.compare(pos_, 2, "//") == 0 || (pos_ < s_.size() && s_[pos_] == '#')) {
                while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
            } else if (s_.compare(pos_, 2, "/*") == 0) {
                auto end = s_.find("*/", pos_ + 2);
                if (end == std::string::npos) fail("unterminated comment");
                pos_ = end + 2;
            } else {
                return;
            }
        }
    }

    void advance() {
        skip_space();
        tok_ = {};
        if (pos_ >= s_.size()) return;
        const char c = s_[pos_];
        if (c == '"') {
            std::string text;
            ++pos_;
            while (pos_ < s_.size() && s_[pos_] != '"') {
                if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
                    if (s_[pos_ + 1] != '"') text += '\\';
                    text += s_[pos_ + 1];
                    pos_ += 2;
                } else {
                    text += s_[pos_++];
                }
            }
            if (pos_ >= s_.size()) fail("unterminated string");
            ++pos_;
            tok_ = {Token::Id, text, true};
            return;
        }
        if (c == '<') {
            int depth = 0;
            const std::size_t start = pos_;
            do {
                if (pos_ >= s_.size()) fail("unterminated HTML id");
                if (s_[pos_] == '<') ++depth;
                if (s_[pos_] == '>') --depth;
                ++pos_;
            } while (depth > 0);
            tok_ = {Token::Id, s_.substr(start, pos_ - start), true};
            return;
        }
        if (s_.compare(pos_, 2, "->") == 0 || s_.compare(pos_, 2, "--") == 0) {
            tok_ = {Token::Punct, s_.substr(pos_, 2)};
            pos_ += 2;
            return;
        }
        if (std::string("{}[]=;,:").find(c) != std::string::npos) {
            tok_ = {Token::Punct, std::string(1, c)};
            ++pos_;
            return;
        }
        const std::size_t start = pos_;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || static_cast<unsigned char>(c) >= 0x80) {
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
                                        static_cast<unsigned char>(s_[pos_]) >= 0x80))
                ++pos_;
        } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '.') {
            ++pos_;
            while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) ++pos_;
        } else {
            fail(std::string("unexpected character '") + c + "'");
        }
        tok_ = {Token::Id, s_.substr(start, pos_ - start)};
    }

    std::string id() {
        if (tok_.kind != Token::Id) fail("expected id");
        std::string out = tok_.text;
        advance();
        return out;
    }

    std::map<std::string, std::string> attr_lists() {
        std::map<std::string, std::string> out;
        while (is_punct("[")) {
            advance();
            while (!is_punct("]")) {
                std::string k = id();
                expect("=");
                out[k] = id();
                if (is_punct(";") || is_punct(",")) advance();
            }
            advance();
        }
        return out;
    }

    void stmt_list(const std::string& cluster) {
        while (!is_punct("}")) {
            if (tok_.kind == Token::End) fail("unexpected end of input");
            stmt(cluster);
            if (is_punct(";")) advance();
        }
    }

    void stmt(const std::string& cluster) {
        if (is_keyword("graph") || is_keyword("node") || is_keyword("edge")) {
            advance();
            attr_lists();
            return;
        }
        if (is_keyword("subgraph") || is_punct("{")) {
            std::string name;
            if (is_keyword("subgraph")) {
                advance();
                if (tok_.kind == Token::Id) name = id();
            }
            expect("{");
            const bool is_cluster = name.rfind("cluster", 0) == 0;
            if (is_cluster) g_.clusters.push_back(name);
            stmt_list(is_cluster ? name : cluster);
            expect("}");
            return;
        }
        std::string first = id();
        if (is_punct("=")) {
            advance();
            id();
            return;
        }
        if (is_punct(":")) {
            advance();
            id();
        }
        if (is_punct("->") || is_punct("--")) {
            if ((tok_.text == "->") != g_.directed) fail("edge operator does not match graph kind");
            std::vector<std::string> chain{first};
            while (is_punct("->") || is_punct("--")) {
                advance();
                chain.push_back(id());
            }
            auto attrs = attr_lists();
            for (std::size_t i = 0; i + 1 < chain.size(); ++i) g_.edges.push_back({chain[i], chain[i + 1], attrs});
            return;
        }
        auto attrs = attr_lists();
        auto& node = g_.nodes[first];
        for (auto& [k, v] : attrs) node[k] = v;
        if (!cluster.empty()) g_.node_cluster[first] = cluster;
    }

    const std::string& s_;
    DotGraph& g_;
    std::size_t pos_ = 0;
    Token tok_;
};

} // namespace

bool parse_dot(const std::string& text, DotGraph& out, std::string& error) {
    out = {};
    try {
        DotParser(text, out).graph();
        return true;
    } catch (const std::exception& e) {
        error = e.what();
        return false;
    }
}

} // namespace relatape::testing
