//! Stratum sampling and the three within-stratum assignment schemes.

use caradj::randomization::{assign, draw_strata, RandomizationScheme};

fn main() -> caradj::Result<()> {
    let strata = draw_strata(&[0.2, 0.2, 0.3, 0.3], 200, 42)?;
    let schemes = [
        ("simple", RandomizationScheme::simple(0.5)?),
        ("permuted block (6)", RandomizationScheme::permuted_block(6, 0.5)?),
        ("biased coin (2/3)", RandomizationScheme::biased_coin(2.0 / 3.0)?),
    ];
    for (name, scheme) in &schemes {
        let arms = assign(scheme, &strata, 7)?;
        let imbalance: Vec<i64> = (1..=4)
            .map(|k| {
                strata
                    .iter()
                    .zip(&arms)
                    .filter(|(&s, _)| s == k)
                    .map(|(_, &a)| if a == 1 { 1 } else { -1 })
                    .sum()
            })
            .collect();
        println!("{name:<20} treated - control per stratum: {imbalance:?}");
    }
    Ok(())
}
