#include "lbsagg/aggregate.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace lbsagg {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::string upper(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

template <class T>
bool compare(const T& a, CmpOp op, const T& b) {
    switch (op) {
        case CmpOp::eq: return a == b;
        case CmpOp::ne: return a != b;
        case CmpOp::lt: return a < b;
        case CmpOp::le: return a <= b;
        case CmpOp::gt: return a > b;
        case CmpOp::ge: return a >= b;
    }
    return false;
}

const char* op_text(CmpOp op) {
    switch (op) {
        case CmpOp::eq: return "=";
        case CmpOp::ne: return "!=";
        case CmpOp::lt: return "<";
        case CmpOp::le: return "<=";
        case CmpOp::gt: return ">";
        case CmpOp::ge: return ">=";
    }
    return "?";
}

}  // namespace

Predicate Predicate::parse(const std::string& text) {
    static const std::array<std::pair<const char*, CmpOp>, 7> ops{{{"==", CmpOp::eq},
                                                                   {"!=", CmpOp::ne},
                                                                   {"<=", CmpOp::le},
                                                                   {">=", CmpOp::ge},
                                                                   {"=", CmpOp::eq},
                                                                   {"<", CmpOp::lt},
                                                                   {">", CmpOp::gt}}};
    for (const auto& [tok, op] : ops) {
        const auto pos = text.find(tok);
        if (pos == std::string::npos) continue;
        Predicate p;
        p.attr = trim(text.substr(0, pos));
        p.op = op;
        const std::string rhs = trim(text.substr(pos + std::char_traits<char>::length(tok)));
        if (p.attr.empty() || rhs.empty()) break;
        double v = 0;
        const auto [ptr, ec] = std::from_chars(rhs.data(), rhs.data() + rhs.size(), v);
        if (ec == std::errc{} && ptr == rhs.data() + rhs.size())
            p.value = v;
        else
            p.value = rhs;
        return p;
    }
    throw DataError("cannot parse predicate '" + text + "'");
}

std::string Predicate::to_string() const {
    std::ostringstream os;
    os << attr << op_text(op);
    if (const auto* d = std::get_if<double>(&value))
        os << *d;
    else
        os << std::get<std::string>(value);
    return os.str();
}

bool Predicate::evaluate(const AttrMap& attrs, std::optional<Point2> loc) const {
    if (uses_location()) {
        if (!loc) throw DataError("predicate on " + attr + " needs the tuple location");
        const auto* d = std::get_if<double>(&value);
        if (!d) throw DataError("location predicate needs a numeric value");
        return compare(attr == "x" ? loc->x : loc->y, op, *d);
    }
    const auto it = attrs.find(attr);
    if (it == attrs.end()) return false;
    if (it->second.index() != value.index()) {
        if (op == CmpOp::ne) return true;
        return false;
    }
    if (const auto* d = std::get_if<double>(&it->second)) return compare(*d, op, std::get<double>(value));
    return compare(std::get<std::string>(it->second), op, std::get<std::string>(value));
}

void AggregateSpec::validate() const {
    if ((kind == AggKind::sum || kind == AggKind::avg) && (!attr || attr->empty()))
        throw DataError("SUM and AVG need an attribute");
    if (condition && condition->pass_through && condition->pred.uses_location())
        throw DataError("location predicates cannot be passed through to the service");
}

AggregateSpec AggregateSpec::parse(const std::string& text) {
    const std::string t = trim(text);
    AggregateSpec s;
    const auto open = t.find('(');
    const std::string head = upper(trim(t.substr(0, open)));
    std::string arg;
    if (open != std::string::npos) {
        const auto close = t.find(')', open);
        if (close == std::string::npos) throw DataError("unbalanced parenthesis in '" + text + "'");
        arg = trim(t.substr(open + 1, close - open - 1));
    }
    if (head == "COUNT") {
        s.kind = AggKind::count;
        if (!arg.empty() && arg != "*") throw DataError("COUNT takes no attribute");
    } else if (head == "SUM" || head == "AVG") {
        s.kind = head == "SUM" ? AggKind::sum : AggKind::avg;
        s.attr = arg;
    } else {
        throw DataError("unknown aggregate '" + text + "'");
    }
    s.validate();
    return s;
}

std::string AggregateSpec::to_string() const {
    switch (kind) {
        case AggKind::count: return "COUNT(*)";
        case AggKind::sum: return "SUM(" + attr.value_or("") + ")";
        case AggKind::avg: return "AVG(" + attr.value_or("") + ")";
    }
    return "?";
}

double AggregateSpec::numerator(const AttrMap& attrs, std::optional<Point2> loc) const {
    if (condition && !condition->pass_through && !condition->pred.evaluate(attrs, loc)) return 0.0;
    if (kind == AggKind::count) return 1.0;
    return numeric_attr(attrs, *attr);
}

double AggregateSpec::denominator(const AttrMap& attrs, std::optional<Point2> loc) const {
    if (condition && !condition->pass_through && !condition->pred.evaluate(attrs, loc)) return 0.0;
    return 1.0;
}

}  // namespace lbsagg
