use exposure_core::corpus::Post;
use exposure_core::scoring::{smooth_question_scores, tag_year_scores, to_table};
use proptest::prelude::*;

const TAGS: [&str; 6] = ["ml", "nlp", "cv", "dl", "rl", "python"];

fn posts_strategy() -> impl Strategy<Value = Vec<Post>> {
    prop::collection::vec(
        (2010i32..=2022, -20i64..5000, prop::sample::subsequence(TAGS.to_vec(), 1..=5)),
        1..60,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (year, votes, tags))| Post {
                id: format!("q{i:04}"),
                year_posted: year,
                votes_final: votes,
                tag_ids: tags.into_iter().map(str::to_string).collect(),
                country: "US".into(),
            })
            .collect()
    })
}

fn scaled(posts: &[Post], c: i64) -> Vec<Post> {
    posts
        .iter()
        .map(|p| Post {
            votes_final: p.votes_final * c,
            ..p.clone()
        })
        .collect()
}

proptest! {
    #[test]
    fn mass_is_conserved(posts in posts_strategy(), decay in 0.05f64..0.95) {
        let series = smooth_question_scores(&posts, decay, 2022).unwrap();
        let table = to_table(&tag_year_scores(&series, &posts).unwrap());
        let total: f64 = table.values().flat_map(|s| s.values()).sum();
        let votes: i64 = posts.iter().filter(|p| p.votes_final > 0).map(|p| p.votes_final).sum();
        prop_assert!((total - votes as f64).abs() <= 1e-6 * (votes as f64).max(1.0));
        for s in &series {
            let v = posts.iter().find(|p| p.id == s.post_id).unwrap().votes_final as f64;
            prop_assert!((s.total() - v).abs() <= 1e-9 * v);
            prop_assert_eq!(s.end_year(), 2022);
            prop_assert!(s.scores.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(s.scores.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn power_of_two_vote_scaling_is_exact(posts in posts_strategy(), k in 1u32..6) {
        let c = 1i64 << k;
        let base = to_table(&tag_year_scores(&smooth_question_scores(&posts, 0.5, 2022).unwrap(), &posts).unwrap());
        let big = scaled(&posts, c);
        let more = to_table(&tag_year_scores(&smooth_question_scores(&big, 0.5, 2022).unwrap(), &big).unwrap());
        prop_assert_eq!(base.len(), more.len());
        for (tag, years) in &base {
            for (y, v) in years {
                prop_assert_eq!(more[tag][y], v * c as f64);
            }
        }
    }

    #[test]
    fn scores_add_over_disjoint_post_sets(posts in posts_strategy(), cut in 0usize..60) {
        let cut = cut.min(posts.len());
        let table = |ps: &[Post]| to_table(&tag_year_scores(&smooth_question_scores(ps, 0.5, 2022).unwrap(), ps).unwrap());
        let all = table(&posts);
        let (a, b) = (table(&posts[..cut]), table(&posts[cut..]));
        for (tag, years) in &all {
            for (y, v) in years {
                let parts: f64 = a.get(tag).and_then(|s| s.get(y)).unwrap_or(&0.0) + b.get(tag).and_then(|s| s.get(y)).unwrap_or(&0.0);
                prop_assert!((v - parts).abs() <= 1e-9 * v.max(1.0));
            }
        }
    }
}
