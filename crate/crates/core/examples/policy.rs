//! Parse an access policy, evaluate it against a few attribute sets and
//! look at the threshold tree that encryption actually uses.
//!
//! ```sh
//! cargo run --example policy
//! ```

use aabac::policy::{compile_policy, evaluate, parse_policy, Attribute, AttributeSet, TreeNode};

fn main() {
    let text = "(Project = Genome1 or Project = Genome2) and Role = Graduate Student and Date <= 05/01/2021";
    let ast = parse_policy(text).expect("valid policy");
    println!("canonical: {ast}");
    println!("attributes: {:?}", ast.attribute_names());

    let student = |project: &str, day: u64| {
        AttributeSet::try_from_iter([
            Attribute::string("Project", project).unwrap(),
            Attribute::string("Role", "Graduate Student").unwrap(),
            Attribute::int("Date", day).unwrap(),
        ])
        .unwrap()
    };
    let may_1 = aabac::policy::date::parse_mdy("05/01/2021").unwrap();
    for (project, day) in [("Genome1", may_1 - 10), ("Genome2", may_1), ("Genome3", may_1), ("Genome1", may_1 + 1)] {
        let date = aabac::policy::date::format_mdy(day);
        println!("{project} on {date}: {}", evaluate(&ast, &student(project, day)));
    }

    // Date is compared bit by bit over a 16-bit day count.
    let tree = compile_policy(&ast, &[("Date".to_string(), 16)].into_iter().collect()).unwrap();
    let gates = tree.nodes().iter().filter(|n| matches!(n, TreeNode::Gate { .. })).count();
    println!("tree: {} leaves, {gates} gates", tree.leaf_count());
    for (_, leaf) in tree.leaves().take(6) {
        println!("  {leaf}");
    }
}
