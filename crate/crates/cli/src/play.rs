//! Interactive play against an agent on the terminal.

use std::io::{BufRead, Write};

use bttt_core::harness::ResolvedAgent;
use bttt_core::{Board, GameRecord, Outcome, Piece, Player, Square};

use crate::config::Side;
use crate::error::CliError;

/// Row A at the top, columns numbered left to right.
pub fn render(board: &Board) -> String {
    let mut s = String::from("  1 2 3 4 5 6 7\n");
    for row in 0..7 {
        s.push((b'A' + row as u8) as char);
        for col in 0..7 {
            let sq = Square::from_row_col(row, col).expect("in range");
            s.push(' ');
            s.push(match board.piece_at(sq) {
                Piece::Empty => '.',
                Piece::O => 'O',
                Piece::X => 'X',
                Piece::Brick => '#',
            });
        }
        s.push('\n');
    }
    s
}

fn announce(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::OWin => "O wins",
        Outcome::XWin => "X wins",
        Outcome::Ongoing => "game unfinished",
    }
}

/// Plays until the game ends or input runs out. Returns the record, which
/// is partial if input ended early.
pub fn play<R: BufRead, W: Write>(
    agent: &ResolvedAgent,
    brick: Square,
    human: Side,
    seed: u64,
    input: &mut R,
    out: &mut W,
) -> Result<GameRecord, CliError> {
    let human = match human {
        Side::O => Player::O,
        Side::X => Player::X,
    };
    let mut bot = agent.build(seed);
    let mut board = Board::new(brick);
    let mut record = GameRecord::new(brick);
    writeln!(
        out,
        "You are {human:?}; {} plays {:?}.",
        agent.name(),
        human.opponent()
    )?;
    while !board.outcome().is_decided() {
        let mv = if board.side_to_move() == human {
            write!(out, "{}{human:?} to move> ", render(&board))?;
            out.flush()?;
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                writeln!(out)?;
                return Ok(record);
            }
            match line.trim().parse::<Square>() {
                Err(e) => {
                    writeln!(out, "{e}")?;
                    continue;
                }
                Ok(sq) if !board.is_legal(sq) => {
                    let reason = board
                        .apply_move(sq)
                        .err()
                        .map(|e| e.to_string())
                        .unwrap_or_default();
                    writeln!(out, "{reason}; try again")?;
                    continue;
                }
                Ok(sq) => sq,
            }
        } else {
            let mv = bot
                .select_move(&board)
                .map_err(|e| CliError::Failed(e.to_string()))?;
            writeln!(out, "{} plays {mv}", agent.name())?;
            mv
        };
        board = board
            .apply_move(mv)
            .map_err(|e| CliError::Failed(e.to_string()))?;
        record.moves.push(mv);
    }
    record.result = board.outcome();
    write!(out, "{}{}\n", render(&board), announce(board.outcome()))?;
    Ok(record)
}
