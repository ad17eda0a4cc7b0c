//! Decay smoothing of question votes and aggregation into yearly tag scores.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Post;
use crate::error::{Error, Result};
use crate::num::{format_sig, pairwise_sum, Real};

/// Smoothed yearly scores of one question, covering `start_year..=end_year`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScoreSeries<T> {
    pub post_id: String,
    pub start_year: i32,
    pub scores: Vec<T>,
}

impl<T: Real> QuestionScoreSeries<T> {
    pub fn end_year(&self) -> i32 {
        self.start_year + self.scores.len() as i32 - 1
    }

    pub fn get(&self, year: i32) -> Option<T> {
        let idx = year.checked_sub(self.start_year)?;
        usize::try_from(idx).ok().and_then(|i| self.scores.get(i).copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, T)> + '_ {
        self.scores
            .iter()
            .enumerate()
            .map(move |(i, &s)| (self.start_year + i as i32, s))
    }

    pub fn total(&self) -> T {
        pairwise_sum(&self.scores)
    }
}

/// Yearly score of one tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagYearScores<T> {
    pub tag_id: String,
    pub scores: BTreeMap<i32, T>,
}

/// Tag scores indexed by tag id, the form consumed by exposure construction.
pub type TagScoreTable<T> = BTreeMap<String, BTreeMap<i32, T>>;

pub fn to_table<T: Real>(scores: &[TagYearScores<T>]) -> TagScoreTable<T> {
    scores
        .iter()
        .map(|s| (s.tag_id.clone(), s.scores.clone()))
        .collect()
}

/// Decay weights for a question first seen in `start`: `decay^(t-start)`
/// normalised so the weights over `start..=end` sum to one.
pub fn decay_weights<T: Real>(decay: T, start: i32, end: i32) -> Vec<T> {
    let n = (end - start + 1) as usize;
    let raw: Vec<T> = (0..n).map(|i| decay.powi(i as i32)).collect();
    // sum_{j=start..end} decay^(end-j) is the same geometric sum
    let norm = pairwise_sum(&raw);
    raw.into_iter().map(|w| w / norm).collect()
}

/// Spread each question's final vote total over the years from posting to
/// `end_year`, halving (for `decay = 0.5`) every year. Posts with
/// non-positive votes are skipped.
pub fn smooth_question_scores<T: Real>(
    posts: &[Post],
    decay: T,
    end_year: i32,
) -> Result<Vec<QuestionScoreSeries<T>>> {
    if !(decay > T::zero() && decay < T::one()) {
        return Err(Error::validation("decay", format!("must lie in (0, 1), got {decay}")));
    }
    if let Some(p) = posts.iter().find(|p| p.year_posted > end_year) {
        return Err(Error::validation(
            "end_year",
            format!("post {} posted in {} after end year {end_year}", p.id, p.year_posted),
        ));
    }
    let mut out: Vec<QuestionScoreSeries<T>> = posts
        .par_iter()
        .filter(|p| p.votes_final > 0)
        .map(|p| {
            let votes = T::from_i64(p.votes_final).expect("vote count fits scalar");
            let scores = decay_weights(decay, p.year_posted, end_year)
                .into_iter()
                .map(|w| votes * w)
                .collect();
            QuestionScoreSeries {
                post_id: p.id.clone(),
                start_year: p.year_posted,
                scores,
            }
        })
        .collect();
    out.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    Ok(out)
}

/// Sum of `S_qt / n_q` over the questions carrying each tag, where `n_q` is
/// the number of tags on the question.
pub fn tag_year_scores<T: Real>(
    series: &[QuestionScoreSeries<T>],
    posts: &[Post],
) -> Result<Vec<TagYearScores<T>>> {
    let by_id: HashMap<&str, &Post> = posts.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut ordered: Vec<&QuestionScoreSeries<T>> = series.iter().collect();
    ordered.sort_by(|a, b| a.post_id.cmp(&b.post_id));

    let mut parts: BTreeMap<(&str, i32), Vec<T>> = BTreeMap::new();
    for s in ordered {
        let post = by_id.get(s.post_id.as_str()).ok_or_else(|| {
            Error::data(format!("score series for unknown post {}", s.post_id))
        })?;
        let mut tag_ids: Vec<&str> = post.tag_ids.iter().map(String::as_str).collect();
        tag_ids.sort_unstable();
        tag_ids.dedup();
        let n_q = T::of_usize(post.tag_ids.len());
        for tag in tag_ids {
            for (year, score) in s.iter() {
                parts.entry((tag, year)).or_default().push(score / n_q);
            }
        }
    }

    let mut out: Vec<TagYearScores<T>> = Vec::new();
    for ((tag, year), vals) in parts {
        let total = pairwise_sum(&vals);
        match out.last_mut() {
            Some(last) if last.tag_id == tag => {
                last.scores.insert(year, total);
            }
            _ => out.push(TagYearScores {
                tag_id: tag.to_string(),
                scores: BTreeMap::from([(year, total)]),
            }),
        }
    }
    Ok(out)
}

/// `tag_id,year,score` with 9 significant digits.
pub fn write_tag_scores_csv<T: Real>(scores: &[TagYearScores<T>], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "tag_id,year,score")?;
    for s in scores {
        for (year, v) in &s.scores {
            writeln!(w, "{},{},{}", csv_field(&s.tag_id), year, format_sig(v.as_f64(), 9))?;
        }
    }
    Ok(())
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(id: &str, year: i32, votes: i64, tags: &[&str]) -> Post {
        Post {
            id: id.into(),
            year_posted: year,
            votes_final: votes,
            tag_ids: tags.iter().map(|s| s.to_string()).collect(),
            country: "US".into(),
        }
    }

    fn series(id: &str, year: i32, score: f64) -> QuestionScoreSeries<f64> {
        QuestionScoreSeries {
            post_id: id.into(),
            start_year: year,
            scores: vec![score],
        }
    }

    #[test]
    fn three_year_example() {
        let s = smooth_question_scores(&[post("q", 2020, 10, &["a"])], 0.5, 2022).unwrap();
        let got: Vec<f64> = s[0].scores.clone();
        let want = [40.0 / 7.0, 20.0 / 7.0, 10.0 / 7.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
        assert!((got[0] - 5.714).abs() < 1e-3);
    }

    #[test]
    fn four_year_example_is_exact_powers_of_two() {
        let s = smooth_question_scores(&[post("q", 2019, 15, &["a"])], 0.5, 2022).unwrap();
        assert_eq!(s[0].scores, vec![8.0, 4.0, 2.0, 1.0]);
        assert_eq!(s[0].start_year, 2019);
        assert_eq!(s[0].end_year(), 2022);
    }

    #[test]
    fn posted_in_end_year_keeps_all_votes() {
        let s = smooth_question_scores(&[post("q", 2022, 7, &["a"])], 0.5, 2022).unwrap();
        assert_eq!(s[0].scores, vec![7.0]);
    }

    #[test]
    fn errors_and_skips() {
        assert!(smooth_question_scores::<f64>(&[post("q", 2023, 7, &["a"])], 0.5, 2022).is_err());
        assert!(smooth_question_scores::<f64>(&[], 1.0, 2022).is_err());
        assert!(smooth_question_scores::<f64>(&[], 0.0, 2022).is_err());
        let s = smooth_question_scores::<f64>(
            &[post("neg", 2020, -3, &["a"]), post("zero", 2020, 0, &["a"])],
            0.5,
            2022,
        )
        .unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn tag_scores_split_by_tag_count() {
        let posts = [
            post("q1", 2010, 1, &["ML", "SemanticComparison", "NLP"]),
            post("q2", 2010, 1, &["ML", "DL"]),
        ];
        let series = [series("q1", 2010, 15.0), series("q2", 2010, 6.0)];
        let t = tag_year_scores(&series, &posts).unwrap();
        let table = to_table(&t);
        assert_eq!(table["ML"][&2010], 8.0);
        assert_eq!(table["DL"][&2010], 3.0);
        assert_eq!(table["NLP"][&2010], 5.0);
    }

    #[test]
    fn deep_learning_example() {
        let posts = [
            post("q1", 2010, 1, &["DeepLearning", "TensorFlow", "Keras"]),
            post("q2", 2010, 1, &["DeepLearning", "ComputerVision"]),
        ];
        let series = [series("q1", 2010, 20.0), series("q2", 2010, 10.0)];
        let table = to_table(&tag_year_scores(&series, &posts).unwrap());
        assert!((table["DeepLearning"][&2010] - 35.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_tag_passes_series_through() {
        let posts = [post("q", 2019, 15, &["a"])];
        let s = smooth_question_scores(&posts, 0.5, 2022).unwrap();
        let table = to_table(&tag_year_scores(&s, &posts).unwrap());
        let got: Vec<f64> = table["a"].values().copied().collect();
        assert_eq!(got, s[0].scores);
    }

    #[test]
    fn unknown_post_in_series_is_an_error() {
        assert!(tag_year_scores(&[series("ghost", 2010, 1.0)], &[]).is_err());
        assert!(tag_year_scores::<f64>(&[], &[]).unwrap().is_empty());
    }

    #[test]
    fn csv_dump_uses_nine_significant_digits() {
        let posts = [post("q", 2020, 10, &["ml"])];
        let s = smooth_question_scores(&posts, 0.5, 2022).unwrap();
        let t = tag_year_scores(&s, &posts).unwrap();
        let mut buf = Vec::new();
        write_tag_scores_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("ml,2020,5.71428571\n"), "{text}");
    }

    #[test]
    fn works_in_f32() {
        let s = smooth_question_scores::<f32>(&[post("q", 2019, 15, &["a"])], 0.5, 2022).unwrap();
        assert_eq!(s[0].scores, vec![8.0f32, 4.0, 2.0, 1.0]);
    }
}
