#include "lmmci/formula.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

#include "lmmci/error.hpp"

namespace lmmci {

std::string Term::label() const {
    if (factors.empty()) {
        return "(Intercept)";
    }
    std::string out = factors.front();
    for (std::size_t i = 1; i < factors.size(); ++i) {
        out += ':';
        out += factors[i];
    }
    return out;
}

bool operator==(const Term& a, const Term& b) {
    if (a.factors.size() != b.factors.size()) {
        return false;
    }
    auto sa = a.factors;
    auto sb = b.factors;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    return sa == sb;
}

std::vector<std::string> ModelFormula::covariates() const {
    std::vector<std::string> out;
    auto add = [&out](const std::string& name) {
        if (std::find(out.begin(), out.end(), name) == out.end()) {
            out.push_back(name);
        }
    };
    for (const auto& term : fixed_terms) {
        for (const auto& f : term.factors) {
            add(f);
        }
    }
    for (const auto& s : random_slopes) {
        add(s);
    }
    return out;
}

std::vector<std::string> ModelFormula::fixed_labels() const {
    std::vector<std::string> out;
    for (const auto& term : fixed_terms) {
        out.push_back(term.label());
    }
    return out;
}

std::vector<std::string> ModelFormula::random_labels() const {
    std::vector<std::string> out;
    if (random_intercept) {
        out.emplace_back("(Intercept)");
    }
    out.insert(out.end(), random_slopes.begin(), random_slopes.end());
    return out;
}

namespace {

enum class Tok { Name, Number, Tilde, Plus, Minus, Star, Colon, LParen, RParen, Bar, End };

struct Token {
    Tok kind;
    std::string text;
    std::size_t pos;
};

std::string describe(const Token& t) {
    return t.kind == Tok::End ? std::string("end of input") : "'" + t.text + "'";
}

bool name_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

bool name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        if (name_start(c)) {
            while (i < text.size() && name_char(text[i])) {
                ++i;
            }
            tokens.push_back({Tok::Name, std::string(text.substr(start, i - start)), start});
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
                ++i;
            }
            tokens.push_back({Tok::Number, std::string(text.substr(start, i - start)), start});
            continue;
        }
        Tok kind;
        switch (c) {
            case '~': kind = Tok::Tilde; break;
            case '+': kind = Tok::Plus; break;
            case '-': kind = Tok::Minus; break;
            case '*': kind = Tok::Star; break;
            case ':': kind = Tok::Colon; break;
            case '(': kind = Tok::LParen; break;
            case ')': kind = Tok::RParen; break;
            case '|': kind = Tok::Bar; break;
            default:
                throw ParseError(start, std::string("unknown token '") + c + "'");
        }
        tokens.push_back({kind, std::string(1, c), start});
        ++i;
    }
    tokens.push_back({Tok::End, "", text.size()});
    return tokens;
}

class Parser {
public:
    explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

    ModelFormula parse() {
        ModelFormula f;
        f.response = expect(Tok::Name, "response name").text;
        expect(Tok::Tilde, "'~'");

        bool intercept = true;
        std::vector<Term> mains;
        std::vector<Term> interactions;
        std::vector<std::size_t> main_pos;
        std::vector<std::size_t> inter_pos;
        bool have_random = false;

        bool first = true;
        bool negate = false;
        while (true) {
            if (!first) {
                if (peek().kind == Tok::End) {
                    break;
                }
                if (peek().kind == Tok::Plus) {
                    advance();
                    negate = false;
                } else if (peek().kind == Tok::Minus) {
                    advance();
                    negate = true;
                } else {
                    fail(peek(), "expected '+' or end of input, found " + describe(peek()));
                }
            }
            else if (peek().kind == Tok::Minus) {
                advance();
                negate = true;
            }
            first = false;

            const Token& t = peek();
            if (have_random) {
                if (t.kind == Tok::LParen) {
                    throw ParseError(t.pos, "more than one random-effects group");
                }
                fail(t, "fixed-effect terms must precede the random-effects group");
            }
            if (negate) {
                // Only "- 1" is meaningful: it removes the intercept.
                if (t.kind == Tok::Number && t.text == "1") {
                    advance();
                    intercept = false;
                    continue;
                }
                fail(t, "only '- 1' is supported after '-'");
            }
            if (t.kind == Tok::Number) {
                if (t.text == "1") {
                    intercept = true;
                } else if (t.text == "0") {
                    intercept = false;
                } else {
                    fail(t, "unexpected number " + describe(t));
                }
                advance();
                continue;
            }
            if (t.kind == Tok::LParen) {
                parse_random(f);
                have_random = true;
                continue;
            }
            const std::size_t term_pos = t.pos;
            for (auto& term : parse_fixed_factor()) {
                const bool is_main = term.factors.size() == 1;
                auto& list = is_main ? mains : interactions;
                auto& positions = is_main ? main_pos : inter_pos;
                if (std::find(mains.begin(), mains.end(), term) != mains.end() ||
                    std::find(interactions.begin(), interactions.end(), term) != interactions.end()) {
                    throw ParseError(term_pos, "duplicate term '" + term.label() + "'");
                }
                list.push_back(std::move(term));
                positions.push_back(term_pos);
            }
        }
        if (!have_random) {
            fail(peek(), "missing random-effects group '(... | cluster)'");
        }

        for (std::size_t i = 0; i < interactions.size(); ++i) {
            for (const auto& factor : interactions[i].factors) {
                if (std::find(mains.begin(), mains.end(), Term{{factor}}) == mains.end()) {
                    throw ParseError(inter_pos[i], "interaction '" + interactions[i].label() +
                                                       "' requires main effect '" + factor + "'");
                }
            }
        }

        if (intercept) {
            f.fixed_terms.push_back(Term{});
        }
        f.fixed_terms.insert(f.fixed_terms.end(), mains.begin(), mains.end());
        f.fixed_terms.insert(f.fixed_terms.end(), interactions.begin(), interactions.end());
        if (f.fixed_terms.empty()) {
            throw ParseError(0, "model has no fixed effects");
        }

        for (const auto& name : f.covariates()) {
            if (name == f.response) {
                throw ParseError(0, "response '" + name + "' used as a predictor");
            }
            if (name == f.cluster) {
                throw ParseError(0, "cluster variable '" + name + "' used as a predictor");
            }
        }
        if (f.cluster == f.response) {
            throw ParseError(0, "cluster variable must differ from the response");
        }
        return f;
    }

private:
    const Token& peek() const { return tokens_[pos_]; }
    const Token& advance() { return tokens_[pos_++]; }

    [[noreturn]] void fail(const Token& t, const std::string& message) const {
        throw ParseError(t.pos, message);
    }

    const Token& expect(Tok kind, const std::string& what) {
        if (peek().kind != kind) {
            fail(peek(), "expected " + what + ", found " + describe(peek()));
        }
        return advance();
    }

    // name | name:name[:name...] | name*name
    std::vector<Term> parse_fixed_factor() {
        const Token& first = expect(Tok::Name, "a term");
        std::vector<std::string> names{first.text};
        if (peek().kind == Tok::Star) {
            advance();
            names.push_back(expect(Tok::Name, "a name after '*'").text);
            if (peek().kind == Tok::Star || peek().kind == Tok::Colon) {
                fail(peek(), "only two-way products 'a*b' are supported");
            }
            if (names[0] == names[1]) {
                throw ParseError(first.pos, "duplicate factor '" + names[0] + "' in product");
            }
            return {Term{{names[0]}}, Term{{names[1]}}, Term{names}};
        }
        while (peek().kind == Tok::Colon) {
            advance();
            const Token& next = expect(Tok::Name, "a name after ':'");
            if (std::find(names.begin(), names.end(), next.text) != names.end()) {
                throw ParseError(next.pos, "duplicate factor '" + next.text + "' in interaction");
            }
            names.push_back(next.text);
        }
        if (peek().kind == Tok::Star) {
            fail(peek(), "cannot combine ':' and '*' in one term");
        }
        return {Term{names}};
    }

    // '(' rand-expr '|' cluster ')'
    void parse_random(ModelFormula& f) {
        expect(Tok::LParen, "'('");
        bool intercept = true;
        bool any_item = false;
        bool first = true;
        while (true) {
            if (!first) {
                if (peek().kind == Tok::Bar) {
                    break;
                }
                expect(Tok::Plus, "'+' or '|'");
            }
            const Token& t = peek();
            if (t.kind == Tok::Number && (t.text == "0" || t.text == "1")) {
                if (!first) {
                    fail(t, "'" + t.text + "' must come first in the random-effects expression");
                }
                intercept = t.text == "1";
                advance();
            } else if (t.kind == Tok::Name) {
                if (std::find(f.random_slopes.begin(), f.random_slopes.end(), t.text) !=
                    f.random_slopes.end()) {
                    throw ParseError(t.pos, "duplicate random term '" + t.text + "'");
                }
                f.random_slopes.push_back(t.text);
                any_item = true;
                advance();
                if (peek().kind == Tok::Colon || peek().kind == Tok::Star) {
                    fail(peek(), "interactions are not supported in random effects");
                }
            } else {
                fail(t, "expected '1', '0' or a name in random effects, found " + describe(t));
            }
            first = false;
        }
        expect(Tok::Bar, "'|'");
        f.cluster = expect(Tok::Name, "cluster name").text;
        if (peek().kind == Tok::Colon || peek().kind == Tok::Bar) {
            fail(peek(), "nested or crossed grouping is not supported");
        }
        expect(Tok::RParen, "')'");
        f.random_intercept = intercept;
        if (!intercept && !any_item) {
            fail(peek(), "random-effects group has no terms");
        }
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
};

}  // namespace

ModelFormula parse_formula(std::string_view text) {
    return Parser(tokenize(text)).parse();
}

std::string to_string(const ModelFormula& formula) {
    std::string out = formula.response + " ~ ";
    out += formula.has_intercept() ? "1" : "0";
    for (const auto& term : formula.fixed_terms) {
        if (!term.is_intercept()) {
            out += " + " + term.label();
        }
    }
    out += " + (";
    out += formula.random_intercept ? "1" : "0";
    for (const auto& s : formula.random_slopes) {
        out += " + " + s;
    }
    out += " | " + formula.cluster + ")";
    return out;
}

}  // namespace lmmci
