//! Reader for the subset of the MATPOWER `.m` case format this workbench needs.
//!
//! Only `mpc.baseMVA`, `mpc.bus`, `mpc.gen`, `mpc.branch` and `mpc.gencost`
//! are interpreted. Other assignments are skipped with a warning.

use log::warn;

use super::{Branch, Bus, Generator, Network};
use crate::error::{Error, Result};

/// Rating substituted for MATPOWER's `rateA = 0` ("unlimited").
pub const UNLIMITED_RATING: f64 = 9900.0;

const BUS_COLS: usize = 17;
const GEN_COLS: usize = 25;
const BRANCH_COLS: usize = 21;

#[derive(Debug, Default)]
struct Matrix {
    rows: Vec<Vec<f64>>,
    /// (line, column) of the first token of each row.
    pos: Vec<(usize, usize)>,
}

/// Parses MATPOWER case text into a [`Network`].
pub fn parse_matpower(text: &str) -> Result<Network> {
    let mut base_mva = None;
    let mut bus = None;
    let mut gen = None;
    let mut branch = None;
    let mut gencost = None;

    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let line_no = i + 1;
        let line = strip_comment(lines[i]);
        let trimmed = line.trim();
        i += 1;
        let Some(rest) = trimmed.strip_prefix("mpc.") else {
            continue;
        };
        let Some(eq) = rest.find('=') else {
            continue;
        };
        let name = rest[..eq].trim();
        let value = rest[eq + 1..].trim();
        let value_col = line.find('=').map(|p| p + 2).unwrap_or(1);

        if value.starts_with('[') {
            let (m, next) = read_matrix(&lines, i - 1, line.find('[').unwrap() + 1)?;
            i = next;
            match name {
                "bus" => bus = Some(m),
                "gen" => gen = Some(m),
                "branch" => branch = Some(m),
                "gencost" => gencost = Some(m),
                other => warn!("ignoring unsupported matrix mpc.{other}"),
            }
        } else if value.starts_with('{') {
            warn!("ignoring cell array mpc.{name}");
            while i <= lines.len() && !strip_comment(lines[i - 1]).contains('}') {
                i += 1;
            }
        } else if name == "baseMVA" {
            let token = value.trim_end_matches(';').trim();
            base_mva = Some(token.parse::<f64>().map_err(|_| Error::Syntax {
                line: line_no,
                column: value_col,
                message: format!("expected number for baseMVA, found `{token}`"),
            })?);
        }
    }

    let missing = |what: &str| Error::Syntax {
        line: lines.len().max(1),
        column: 1,
        message: format!("missing mpc.{what}"),
    };
    let base_mva = base_mva.ok_or_else(|| missing("baseMVA"))?;
    let bus = bus.ok_or_else(|| missing("bus"))?;
    let gen = gen.unwrap_or_default();
    let branch = branch.ok_or_else(|| missing("branch"))?;

    build_network(base_mva, &bus, &gen, &branch, gencost.as_ref())
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(p) => &line[..p],
        None => line,
    }
}

/// Reads matrix rows starting at `lines[start]`, column offset `col` (just past `[`).
/// Returns the matrix and the index of the line after the closing `]`.
fn read_matrix(lines: &[&str], start: usize, col: usize) -> Result<(Matrix, usize)> {
    let mut m = Matrix::default();
    let mut row: Vec<f64> = Vec::new();
    let mut row_pos = None;
    let mut idx = start;
    let mut offset = col;
    while idx < lines.len() {
        let line = strip_comment(lines[idx]);
        let bytes = line.as_bytes();
        let mut p = offset.min(bytes.len());
        while p < bytes.len() {
            let c = bytes[p] as char;
            if c.is_whitespace() || c == ',' {
                p += 1;
            } else if c == ';' {
                if !row.is_empty() {
                    m.rows.push(std::mem::take(&mut row));
                    m.pos.push(row_pos.take().unwrap());
                }
                p += 1;
            } else if c == ']' {
                if !row.is_empty() {
                    m.rows.push(std::mem::take(&mut row));
                    m.pos.push(row_pos.take().unwrap());
                }
                return Ok((m, idx + 1));
            } else {
                let begin = p;
                while p < bytes.len() {
                    let d = bytes[p] as char;
                    if d.is_whitespace() || d == ',' || d == ';' || d == ']' {
                        break;
                    }
                    p += 1;
                }
                let token = &line[begin..p];
                let value = token.parse::<f64>().map_err(|_| Error::Syntax {
                    line: idx + 1,
                    column: begin + 1,
                    message: format!("expected number, found `{token}`"),
                })?;
                row_pos.get_or_insert((idx + 1, begin + 1));
                row.push(value);
            }
        }
        // a newline also ends a row
        if !row.is_empty() {
            m.rows.push(std::mem::take(&mut row));
            m.pos.push(row_pos.take().unwrap());
        }
        idx += 1;
        offset = 0;
    }
    Err(Error::Syntax {
        line: lines.len(),
        column: 1,
        message: "unterminated matrix (missing `]`)".into(),
    })
}

fn need(m: &Matrix, r: usize, cols: usize, what: &str) -> Result<()> {
    if m.rows[r].len() < cols {
        let (line, column) = m.pos[r];
        return Err(Error::Syntax {
            line,
            column,
            message: format!("{what} row has {} columns, need at least {cols}", m.rows[r].len()),
        });
    }
    Ok(())
}

fn build_network(
    base_mva: f64,
    bus_m: &Matrix,
    gen_m: &Matrix,
    branch_m: &Matrix,
    gencost_m: Option<&Matrix>,
) -> Result<Network> {
    let mut external = std::collections::HashMap::new();
    let mut buses = Vec::with_capacity(bus_m.rows.len());
    let mut wide = false;
    for (r, row) in bus_m.rows.iter().enumerate() {
        need(bus_m, r, 3, "bus")?;
        wide |= row.len() > BUS_COLS;
        let number = row[0] as usize;
        if external.insert(number, buses.len()).is_some() {
            return Err(Error::DuplicateId { kind: "bus", id: number });
        }
        buses.push(Bus {
            id: buses.len(),
            load_p: row[2],
            shed_priority: 1.0,
            is_slack: row[1] as i64 == 3,
        });
    }
    if wide {
        warn!("mpc.bus has columns beyond the standard layout; extra columns ignored");
    }

    let mut generators = Vec::new();
    wide = false;
    for (r, row) in gen_m.rows.iter().enumerate() {
        need(gen_m, r, 10, "gen")?;
        wide |= row.len() > GEN_COLS;
        if row[7] <= 0.0 {
            warn!("generator row {} is out of service; skipped", r + 1);
            continue;
        }
        let number = row[0] as usize;
        let bus = *external.get(&number).ok_or_else(|| {
            Error::InvalidNetwork(format!("generator row {} sits on nonexistent bus {number}", r + 1))
        })?;
        let mut p_min = row[9];
        if p_min < 0.0 {
            warn!("generator row {} has negative Pmin {p_min}; clamped to 0", r + 1);
            p_min = 0.0;
        }
        let cost = gencost_m
            .and_then(|gc| gc.rows.get(r))
            .map(|c| linear_cost(c))
            .unwrap_or(1.0);
        generators.push(Generator { id: generators.len(), bus, p_max: row[8], p_min, cost });
    }
    if wide {
        warn!("mpc.gen has columns beyond the standard layout; extra columns ignored");
    }

    let mut branches = Vec::new();
    wide = false;
    for (r, row) in branch_m.rows.iter().enumerate() {
        need(branch_m, r, 6, "branch")?;
        wide |= row.len() > BRANCH_COLS;
        if row.len() > 10 && row[10] <= 0.0 {
            warn!("branch row {} is out of service; skipped", r + 1);
            continue;
        }
        let id = branches.len();
        let endpoint = |number: f64| {
            external
                .get(&(number as usize))
                .copied()
                .ok_or(Error::DanglingEndpoint { branch: id, bus: number as usize })
        };
        let from_bus = endpoint(row[0])?;
        let to_bus = endpoint(row[1])?;
        let reactance = row[3];
        if !(reactance > 0.0) {
            return Err(Error::NonpositiveReactance { branch: id, reactance });
        }
        let mut rating_long = row[5];
        if rating_long <= 0.0 {
            warn!("branch row {} has rateA = 0 (unlimited); using {UNLIMITED_RATING} MW", r + 1);
            rating_long = UNLIMITED_RATING;
        }
        branches.push(Branch {
            id,
            from_bus,
            to_bus,
            reactance,
            rating_long,
            cost_weight: rating_long / base_mva,
        });
    }
    if wide {
        warn!("mpc.branch has columns beyond the standard layout; extra columns ignored");
    }

    Network::new(base_mva, buses, branches, generators)
}

/// Per-MW cost from a gencost row: the linear coefficient of a polynomial
/// model, or the first segment's slope of a piecewise-linear one.
fn linear_cost(row: &[f64]) -> f64 {
    if row.len() < 4 {
        return 1.0;
    }
    let n = row[3] as usize;
    match row[0] as i64 {
        2 if n >= 2 && row.len() >= 4 + n => row[4 + n - 2],
        2 => 0.0,
        1 if n >= 2 && row.len() >= 4 + 2 * n => {
            let (x1, y1, x2, y2) = (row[4], row[5], row[6], row[7]);
            if (x2 - x1).abs() > 0.0 {
                (y2 - y1) / (x2 - x1)
            } else {
                1.0
            }
        }
        _ => 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::IEEE30_CASE;

    const TINY: &str = "
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0;
  2 1 50 0;
];
mpc.gen = [
  1 0 0 0 0 1 100 1 80 0;
];
mpc.branch = [
  1 2 0 0.1 0 40 40 40 0 0 1;
];
mpc.gencost = [ 2 0 0 3 0.01 2.5 0 ];
";

    #[test]
    fn parses_tiny_case() {
        let net = parse_matpower(TINY).unwrap();
        assert_eq!(net.n_buses(), 2);
        assert_eq!(net.n_branches(), 1);
        assert_eq!(net.generators()[0].cost, 2.5);
        assert!(net.buses()[0].is_slack);
        assert_eq!(net.branches()[0].rating_long, 40.0);
    }

    #[test]
    fn ieee30_costs_and_ratings() {
        let net = parse_matpower(IEEE30_CASE).unwrap();
        let costs: Vec<f64> = net.generators().iter().map(|g| g.cost).collect();
        assert_eq!(costs, vec![2.0, 1.75, 1.0, 3.25, 3.0, 3.0]);
        assert!((net.total_load() - 189.2).abs() < 1e-9);
        assert!((net.total_capacity() - 335.0).abs() < 1e-9);
        assert_eq!(net.branches()[40].from_bus, 5);
        assert_eq!(net.branches()[40].to_bus, 27);
    }

    #[test]
    fn dangling_endpoint() {
        let text = TINY.replace("1 2 0 0.1", "1 99 0 0.1");
        match parse_matpower(&text) {
            Err(Error::DanglingEndpoint { branch: 0, bus: 99 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nonpositive_reactance() {
        let text = TINY.replace("1 2 0 0.1", "1 2 0 0");
        assert!(matches!(parse_matpower(&text), Err(Error::NonpositiveReactance { .. })));
    }

    #[test]
    fn duplicate_bus() {
        let text = TINY.replace("2 1 50 0;", "1 1 50 0;");
        assert!(matches!(parse_matpower(&text), Err(Error::DuplicateId { kind: "bus", id: 1 })));
    }

    #[test]
    fn syntax_error_position() {
        let text = TINY.replace("2 1 50 0;", "2 1 5x0 0;");
        match parse_matpower(&text) {
            Err(Error::Syntax { line, column, .. }) => {
                assert_eq!(line, 5);
                assert_eq!(column, 7);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unterminated_matrix() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [\n 1 3 0 0;\n";
        assert!(matches!(parse_matpower(text), Err(Error::Syntax { .. })));
    }
}
