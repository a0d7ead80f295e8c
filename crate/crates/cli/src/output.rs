//! Plain-text artifact formats.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use inertia_core::lmi::LinearMatrixExpression;
use inertia_core::mrc::GainPair;
use inertia_core::sim::{Trajectory, CHANNELS};
use inertia_core::Matrix;

use crate::error::CliError;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(io_err(path))
}

/// CSV with header `time,d_omega_d,omega_hat,omega_m,p_gen,p_ed,u_ie,p_l`,
/// values in shortest round-trip form.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let csv_err = |e: csv::Error| CliError::Format { path: path.display().to_string(), message: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CHANNELS).map_err(csv_err)?;
    let cols = traj.columns();
    for k in 0..traj.len() {
        w.write_record(cols.iter().map(|c| c[k].to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory, CliError> {
    let bad = |message: String| CliError::Format { path: path.display().to_string(), message };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(CHANNELS) {
        return Err(bad(format!("expected header {}", CHANNELS.join(","))));
    }
    let mut t = Trajectory::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("row {}: {e}", i + 2)))?;
        for (col, x) in [
            &mut t.time,
            &mut t.d_omega_d,
            &mut t.omega_hat,
            &mut t.omega_m,
            &mut t.p_gen,
            &mut t.p_ed,
            &mut t.u_ie,
            &mut t.p_l,
        ]
        .into_iter()
        .zip(v)
        {
            col.push(x);
        }
    }
    Ok(t)
}

pub const GAIN_HEADER: &str =
    "# K_p over [d_omega_d, d_p_m, d_p_v, d_omega_m], then K_r over [omega_hat, p_m_hat, p_v_hat]";

pub fn write_gain_file(path: &Path, gains: &GainPair) -> Result<(), CliError> {
    let mut w = create(path)?;
    let values: Vec<String> = gains.to_vec().iter().map(|v| v.to_string()).collect();
    writeln!(w, "{GAIN_HEADER}\n{}", values.join(" ")).map_err(io_err(path))?;
    finish(w, path)
}

/// Seven numbers separated by whitespace or commas; `#` starts a comment.
pub fn parse_gains(text: &str) -> Result<GainPair, String> {
    let values: Vec<f64> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}")))
        .collect::<Result<_, _>>()?;
    GainPair::from_slice(&values).map_err(|e| e.to_string())
}

pub fn read_gain_file(path: &Path) -> Result<GainPair, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_gains(&text).map_err(|message| CliError::Format { path: path.display().to_string(), message })
}

/// Blocks of `# name rows cols` followed by row-major rows.
pub fn write_matrix_dump(path: &Path, matrices: &[(&str, &Matrix)]) -> Result<(), CliError> {
    let mut w = create(path)?;
    for (name, m) in matrices {
        writeln!(w, "# {name} {} {}", m.nrows(), m.ncols()).map_err(io_err(path))?;
        for i in 0..m.nrows() {
            let row: Vec<String> = m.row_slice(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(" ")).map_err(io_err(path))?;
        }
    }
    finish(w, path)
}

pub fn read_matrix_dump(path: &Path) -> Result<Vec<(String, Matrix)>, CliError> {
    let bad = |message: String| CliError::Format { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    let mut out = Vec::new();
    while let Some((ln, header)) = lines.next() {
        let parts: Vec<&str> = header.trim_start_matches('#').split_whitespace().collect();
        let [name, r, c] = parts[..] else {
            return Err(bad(format!("line {}: expected `# name rows cols`", ln + 1)));
        };
        let (r, c): (usize, usize) = (r.parse().map_err(|_| bad(format!("line {}", ln + 1)))?, c.parse().map_err(|_| bad(format!("line {}", ln + 1)))?);
        let mut data = Vec::with_capacity(r * c);
        for _ in 0..r {
            let (ln, row) = lines.next().ok_or_else(|| bad(format!("`{name}` truncated")))?;
            for s in row.split_whitespace() {
                data.push(s.parse::<f64>().map_err(|e| bad(format!("line {}: {e}", ln + 1)))?);
            }
        }
        if data.len() != r * c {
            return Err(bad(format!("`{name}` has {} values, expected {}", data.len(), r * c)));
        }
        out.push((name.to_string(), Matrix::from_row_slice(r, c, &data)));
    }
    Ok(out)
}

/// One coefficient per line; only the upper triangle of each constraint is
/// listed and off-diagonal entries stand for both mirrored positions.
pub fn write_lmi_dump(path: &Path, expr: &LinearMatrixExpression) -> Result<(), CliError> {
    let mut w = create(path)?;
    writeln!(w, "# variable constraint block_row block_col local_row local_col value").map_err(io_err(path))?;
    for c in &expr.constraints {
        writeln!(w, "# constraint {} blocks {:?}", c.name, c.block_sizes).map_err(io_err(path))?;
    }
    for e in expr.sparse_entries() {
        writeln!(
            w,
            "{} {} {} {} {} {} {}",
            e.variable, e.constraint, e.block_row, e.block_col, e.local_row, e.local_col, e.value
        )
        .map_err(io_err(path))?;
    }
    finish(w, path)
}

/// Gnuplot script drawing speed, turbine speed and power panels from the
/// scenario CSVs sitting next to it.
pub fn write_plot_script(path: &Path, scenarios: &[String]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let panel = |cols: &[(usize, &str)]| -> String {
        scenarios
            .iter()
            .flat_map(|s| cols.iter().map(move |(c, label)| format!("'{s}.csv' every ::1 using 1:{c} with lines title '{s} {label}'")))
            .collect::<Vec<_>>()
            .join(", \\\n     ")
    };
    let script = format!(
        "set datafile separator ','\n\
         set terminal pngcairo size 900,1100\n\
         set output 'response.png'\n\
         set multiplot layout 3,1\n\
         set xlabel 'time (s)'\n\
         set grid\n\
         set title 'Diesel and reference speed deviation'\n\
         set ylabel 'pu'\n\
         plot {}\n\
         set title 'Wind turbine speed deviation'\n\
         set ylabel 'pu'\n\
         plot {}\n\
         set title 'Active power deviation'\n\
         set ylabel 'pu'\n\
         plot {}\n\
         unset multiplot\n",
        panel(&[(2, "d_omega_d"), (3, "omega_hat")]),
        panel(&[(4, "omega_m")]),
        panel(&[(5, "p_gen"), (6, "p_ed"), (7, "u_ie")]),
    );
    w.write_all(script.as_bytes()).map_err(io_err(path))?;
    finish(w, path)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::Format { path: path.display().to_string(), message: e.to_string() })?;
    writeln!(w).map_err(io_err(path))?;
    finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gain_text_accepts_commas_and_comments() {
        let g = parse_gains("# published\n-15.22, 3.90, 3.89, 9.21\n13.85 -7.90 -3.37 # K_r\n").unwrap();
        assert_eq!(g.to_vec(), vec![-15.22, 3.90, 3.89, 9.21, 13.85, -7.90, -3.37]);
        assert!(parse_gains("1 2 3").is_err());
        assert!(parse_gains("1 2 3 4 5 6 x").is_err());
        assert!(parse_gains("1 2 3 4 5 6 NaN").is_err());
    }
}
