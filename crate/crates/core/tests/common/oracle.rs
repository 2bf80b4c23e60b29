//! Hand-counted metric cases. Operators: = + - * % < > <= >= == != if elif
//! else for in range print; operands: identifiers and literals (a negative
//! literal is one operand).

pub struct Case {
    pub name: &'static str,
    pub src: &'static str,
    pub cc: f64,
    /// eta1, eta2, N1, N2
    pub counts: (usize, usize, usize, usize),
    pub hd: f64,
    pub om: f64,
}

pub const CASES: &[Case] = &[
    // = + / a 1 2
    Case { name: "sum_assignment", src: "a = 1 + 2\n", cc: 1.0, counts: (2, 3, 2, 3), hd: 1.0, om: 1.0 },
    Case { name: "lone_print", src: "print(a)\n", cc: 1.0, counts: (1, 1, 1, 1), hd: 0.5, om: 0.75 },
    Case { name: "empty", src: "", cc: 1.0, counts: (0, 0, 0, 0), hd: 0.0, om: 0.5 },
    // = print / a 5 a
    Case { name: "assign_print", src: "a = 5\nprint(a)\n", cc: 1.0, counts: (2, 2, 2, 3), hd: 1.5, om: 1.25 },
    // = if < print else print / a 5 a 2 0 1
    Case {
        name: "if_else",
        src: "a = 5\nif a < 2 :\n    print(0)\nelse :\n    print(1)\n",
        cc: 2.0,
        counts: (5, 5, 6, 6),
        hd: 3.0,
        om: 2.5,
    },
    // = if < print elif < print else print / a 5 a 2 0 a 6 1 2
    Case {
        name: "if_elif_else",
        src: "a = 5\nif a < 2 :\n    print(0)\nelif a < 6 :\n    print(1)\nelse :\n    print(2)\n",
        cc: 3.0,
        counts: (6, 6, 9, 9),
        hd: 4.5,
        om: 3.75,
    },
    // for in range print / a 3 a
    Case { name: "single_loop", src: "for a in range(3) :\n    print(a)\n", cc: 2.0, counts: (4, 2, 4, 3), hd: 3.0, om: 2.5 },
    // for in range for in range print * / a 2 b a 3 a b
    Case {
        name: "nested_loops",
        src: "for a in range(2) :\n    for b in range(a, 3) :\n        print(a * b)\n",
        cc: 3.0,
        counts: (5, 4, 8, 7),
        hd: 4.375,
        om: 3.6875,
    },
    // for in range if < print elif == print else = % / a 4 a 1 a a 2 0 b a 3
    Case {
        name: "chain_in_loop",
        src: "for a in range(4) :\n    if a < 1 :\n        print(a)\n    elif a == 2 :\n        print(0)\n    else :\n        b = a % 3\n",
        cc: 4.0,
        counts: (11, 7, 12, 11),
        hd: 60.5 / 7.0,
        om: 88.5 / 14.0,
    },
    // = + * / a 1 2 3
    Case { name: "precedence", src: "a = 1 + 2 * 3\n", cc: 1.0, counts: (3, 4, 3, 4), hd: 1.5, om: 1.25 },
    // parentheses are not counted
    Case { name: "parenthesised", src: "a = (1 + 2) * 3\n", cc: 1.0, counts: (3, 4, 3, 4), hd: 1.5, om: 1.25 },
    // = = * print % / a 2 b a a b 7
    Case { name: "square_mod", src: "a = 2\nb = a * a\nprint(b % 7)\n", cc: 1.0, counts: (4, 4, 5, 7), hd: 3.5, om: 2.25 },
    // = = print + / a 3 b 3 a b
    Case { name: "repeated_literal", src: "a = 3\nb = 3\nprint(a + b)\n", cc: 1.0, counts: (3, 3, 4, 6), hd: 3.0, om: 2.0 },
    // =x5 if <= elifx3 >= > != / a 1 a 2 a 0 a 5 a 1 a 7 a 2 a 3 a 3
    Case {
        name: "all_comparisons",
        src: "a = 1\nif a <= 2 :\n    a = 0\nelif a >= 5 :\n    a = 1\nelif a > 7 :\n    a = 2\nelif a != 3 :\n    a = 3\n",
        cc: 5.0,
        counts: (7, 7, 13, 18),
        hd: 9.0,
        om: 7.0,
    },
    Case { name: "print_literal", src: "print(7)\n", cc: 1.0, counts: (1, 1, 1, 1), hd: 0.5, om: 0.75 },
    // = if == print / a 4 a 4 a
    Case { name: "if_without_else", src: "a = 4\nif a == 4 :\n    print(a)\n", cc: 2.0, counts: (4, 2, 4, 5), hd: 5.0, om: 3.5 },
    // = for in range = + print / b 0 a 1 4 b b a b
    Case {
        name: "accumulate",
        src: "b = 0\nfor a in range(1, 4) :\n    b = b + a\nprint(b)\n",
        cc: 2.0,
        counts: (6, 5, 7, 9),
        hd: 5.4,
        om: 3.7,
    },
    // = % print / a -3 2 a
    Case { name: "negative_literal", src: "a = -3 % 2\nprint(a)\n", cc: 1.0, counts: (3, 3, 3, 4), hd: 2.0, om: 1.5 },
    // = if < if > print / a 1 a 5 a 0 a
    Case {
        name: "nested_ifs",
        src: "a = 1\nif a < 5 :\n    if a > 0 :\n        print(a)\n",
        cc: 3.0,
        counts: (5, 4, 6, 7),
        hd: 4.375,
        om: 3.6875,
    },
    // = - - / a 1 2 3
    Case { name: "left_chain", src: "a = 1 - 2 - 3\n", cc: 1.0, counts: (2, 4, 3, 4), hd: 1.0, om: 1.0 },
    // for in range for in range print / a 2 a 2 a  -> exactly on the hard threshold
    Case {
        name: "shadowed_loops",
        src: "for a in range(2) :\n    for a in range(2) :\n        print(a)\n",
        cc: 3.0,
        counts: (4, 2, 7, 5),
        hd: 5.0,
        om: 4.0,
    },
    // = % * / c 9 4 2
    Case { name: "mod_then_mul", src: "c = 9 % 4 * 2\n", cc: 1.0, counts: (3, 4, 3, 4), hd: 1.5, om: 1.25 },
    // = if > print else = / a 0 a 0 a a 1
    Case {
        name: "else_assigns",
        src: "a = 0\nif a > 0 :\n    print(a)\nelse :\n    a = 1\n",
        cc: 2.0,
        counts: (5, 3, 6, 7),
        hd: 17.5 / 3.0,
        om: 23.5 / 6.0,
    },
];
