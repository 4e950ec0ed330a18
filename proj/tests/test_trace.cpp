#include "doctest.h"
#include "dyntree/error.hpp"
#include "dyntree/trace.hpp"

using namespace dyntree;

TEST_CASE("trace text round trip") {
    std::vector<TraceOp> ops{{OpKind::Insert, 0}, {OpKind::Access, 18446744073709551615ull},
                             {OpKind::Decrement, 7}, {OpKind::Delete, 7}};
    std::string text = format_trace(ops);
    CHECK(text == "I 0\nA 18446744073709551615\nD 7\nX 7\n");
    auto back = parse_trace(text);
    REQUIRE(back.size() == ops.size());
    for (std::size_t i = 0; i < ops.size(); ++i) {
        CHECK(back[i].kind == ops[i].kind);
        CHECK(back[i].key == ops[i].key);
    }
    CHECK(parse_trace("I 3\r\nA 3\r\n").size() == 2);
    CHECK(parse_trace("").empty());
}

TEST_CASE("malformed trace lines name the line") {
    for (const char* bad : {"I 1\nQ 2\n", "I 1\nA\n", "I 1\nA -2\n", "I 1\nA 2x\n", "I 1\nA  2\n",
                            "I 1\nA 18446744073709551616\n", "I 1\n\n"}) {
        try {
            parse_trace(bad);
            FAIL("accepted: " << bad);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ParseError);
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
    std::vector<TraceOp> search{{OpKind::Search, 1}};
    CHECK_THROWS_AS(format_trace(search), Error);
}
