//! Drive the command-line tool without spawning a process: write a logits
//! file, then run `metrics` and `reliability` on it.

use calref::cli::run;
use calref::io::write_logits_file;
use calref::EvalSet;
use ndarray::array;

fn main() -> calref::Result<()> {
    let dir = tempfile::TempDir::new()?;
    let path = dir.path().join("logits.csv");
    let set = EvalSet::new(
        array![[0.405, 0.0], [0.405, 0.0], [1.386, 0.0], [1.386, 0.0]],
        vec![0, 1, 0, 0],
    )?;
    write_logits_file(&path, &set)?;
    let file = path.to_str().unwrap();

    let mut out = Vec::new();
    let mut err = Vec::new();
    for args in [
        vec![
            "calref",
            "metrics",
            "--logits",
            file,
            "--bins",
            "2",
            "--p",
            "1",
            "--scheme",
            "equal-width",
        ],
        vec![
            "calref",
            "reliability",
            "--logits",
            file,
            "--bins",
            "2",
            "--scheme",
            "equal-width",
        ],
    ] {
        let code = run(args, None, &mut out, &mut err);
        println!("exit {code}");
    }
    print!("{}", String::from_utf8_lossy(&out));
    Ok(())
}
