//! Line-delimited JSON game records.
//!
//! One object per line:
//! `{"brick":"D4","moves":["C3","D3",...],"result":"O","meta":{...}}`.
//! `result` is `"O"` or `"X"`, or `null` for an unfinished game.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Board, BoardError, Outcome, Square, CELLS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameRecord {
    pub brick: Square,
    pub moves: Vec<Square>,
    #[serde(with = "result_repr")]
    pub result: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<RecordMeta>,
}

/// Optional per-move annotations, aligned with `moves`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordMeta {
    /// Agent names playing O and X.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub players: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub think_time_s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub policies: Vec<Option<Vec<f32>>>,
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Replay { line: usize, source: BoardError },
    #[error("line {line}: recorded result {recorded:?} but replay gives {replayed:?}")]
    ResultMismatch {
        line: usize,
        recorded: Outcome,
        replayed: Outcome,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

mod result_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::Outcome;

    pub fn serialize<S: Serializer>(o: &Outcome, s: S) -> Result<S::Ok, S::Error> {
        match o {
            Outcome::OWin => s.serialize_str("O"),
            Outcome::XWin => s.serialize_str("X"),
            Outcome::Ongoing => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Outcome, D::Error> {
        match Option::<String>::deserialize(d)?.as_deref() {
            None => Ok(Outcome::Ongoing),
            Some("O") => Ok(Outcome::OWin),
            Some("X") => Ok(Outcome::XWin),
            Some(other) => Err(serde::de::Error::custom(format!(
                "unknown result {other:?}, expected \"O\" or \"X\""
            ))),
        }
    }
}

impl GameRecord {
    pub fn new(brick: Square) -> GameRecord {
        GameRecord {
            brick,
            moves: Vec::new(),
            result: Outcome::Ongoing,
            meta: None,
        }
    }

    /// Replays the moves and returns the final board.
    pub fn replay(&self) -> Result<Board, BoardError> {
        Board::from_moves(self.brick, &self.moves)
    }

    fn validate(&self, line: usize) -> Result<(), RecordError> {
        let board = self
            .replay()
            .map_err(|source| RecordError::Replay { line, source })?;
        if board.outcome() != self.result {
            return Err(RecordError::ResultMismatch {
                line,
                recorded: self.result,
                replayed: board.outcome(),
            });
        }
        if let Some(meta) = &self.meta {
            let n = self.moves.len();
            if !meta.think_time_s.is_empty() && meta.think_time_s.len() != n {
                return Err(RecordError::Parse {
                    line,
                    message: "think_time_s length differs from moves".into(),
                });
            }
            if !meta.policies.is_empty() && meta.policies.len() != n {
                return Err(RecordError::Parse {
                    line,
                    message: "policies length differs from moves".into(),
                });
            }
            if meta.policies.iter().flatten().any(|p| p.len() != CELLS) {
                return Err(RecordError::Parse {
                    line,
                    message: format!("policy vectors must have {CELLS} entries"),
                });
            }
        }
        Ok(())
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }

    /// Parses and validates a single line (`line` is 1-based, for messages).
    pub fn from_line(text: &str, line: usize) -> Result<GameRecord, RecordError> {
        let rec: GameRecord = serde_json::from_str(text).map_err(|e| RecordError::Parse {
            line,
            message: e.to_string(),
        })?;
        rec.validate(line)?;
        Ok(rec)
    }
}

pub fn write_records<W: Write>(mut w: W, records: &[GameRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_line())?;
    }
    Ok(())
}

/// Reads records, skipping blank lines.
pub fn read_records<R: BufRead>(r: R) -> Result<Vec<GameRecord>, RecordError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line_text = line?;
        if line_text.trim().is_empty() {
            continue;
        }
        out.push(GameRecord::from_line(&line_text, i + 1)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_record(rng: &mut ChaCha8Rng) -> GameRecord {
        let (board, moves) = random_playout(random_square(rng), 48, rng);
        let n = moves.len();
        let meta = rng.random_bool(0.5).then(|| RecordMeta {
            players: Some(["random".into(), "mcts:1000".into()]),
            think_time_s: (0..n).map(|_| rng.random::<f64>() * 1e-3).collect(),
            policies: (0..n)
                .map(|i| (i % 3 == 0).then(|| vec![1.0 / 49.0; 49]))
                .collect(),
        });
        GameRecord {
            brick: board.brick(),
            moves,
            result: board.outcome(),
            meta,
        }
    }

    #[test]
    fn random_games_round_trip_byte_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let records: Vec<_> = (0..1000).map(|_| random_record(&mut rng)).collect();
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        let parsed = read_records(buf.as_slice()).unwrap();
        assert_eq!(parsed, records);
        let mut again = Vec::new();
        write_records(&mut again, &parsed).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn emits_uppercase_and_parses_lowercase() {
        let line = r#"{"brick":"d4","moves":["c3"],"result":null}"#;
        let rec = GameRecord::from_line(line, 1).unwrap();
        assert_eq!(
            rec.to_line(),
            r#"{"brick":"D4","moves":["C3"],"result":null}"#
        );
    }

    #[test]
    fn illegal_replay_is_reported_with_line_number() {
        let text = "{\"brick\":\"D4\",\"moves\":[],\"result\":null}\n{\"brick\":\"D4\",\"moves\":[\"C3\",\"C3\"],\"result\":\"O\"}\n";
        match read_records(text.as_bytes()) {
            Err(RecordError::Replay { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_and_mismatched_lines_fail() {
        assert!(matches!(
            GameRecord::from_line("{not json", 3),
            Err(RecordError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            GameRecord::from_line(r#"{"brick":"D4","moves":["C3"],"result":"X"}"#, 1),
            Err(RecordError::ResultMismatch { .. })
        ));
        assert!(GameRecord::from_line(r#"{"brick":"Z9","moves":[],"result":null}"#, 1).is_err());
    }
}
