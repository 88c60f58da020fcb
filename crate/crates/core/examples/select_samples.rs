//! The four selection strategies on one score table.

use alflow::uncertainty::{select, Member, Metric, ScoreRecord, Strategy};
use alflow::Budget;

fn main() -> alflow::Result<()> {
    let scores = [
        ("alley_1", "alley", 0.12),
        ("alley_2", "alley", 0.31),
        ("ambush_1", "ambush", 0.58),
        ("ambush_2", "ambush", 0.44),
        ("bamboo_1", "bamboo", 0.05),
        ("bamboo_2", "bamboo", 0.07),
        ("cave_1", "cave", 0.39),
        ("cave_2", "cave", 0.21),
        ("market_1", "market", 0.33),
        ("market_2", "market", 0.18),
    ];
    let records: Vec<ScoreRecord> = scores
        .iter()
        .map(|&(id, _, v)| ScoreRecord {
            sample_id: id.into(),
            metric: Metric::OccRatio,
            value: v,
        })
        .collect();
    let members: Vec<Member> = scores.iter().map(|&(id, g, _)| Member::new(id, g)).collect();

    let budget = Budget::new(0.3)?;
    println!("k = {} of {}", budget.count(members.len()), members.len());
    for strategy in Strategy::ALL {
        for seed in [0, 1] {
            let sel = select(&records, &members, budget, strategy, seed)?;
            println!("{:<13} seed {seed}: {}", strategy.name(), sel.chosen.join(", "));
        }
    }
    Ok(())
}
