//! Logits files and run configurations, the formats the command-line tool
//! reads and writes.

use calref::io::{parse_run_config, read_logits, write_logits};
use calref::EvalSet;
use ndarray::array;

fn main() -> calref::Result<()> {
    let set = EvalSet::new(array![[0.1, 2.0], [1.0 / 3.0, -7.25e-9]], vec![1, 0])?;
    let mut buf = Vec::new();
    write_logits(&mut buf, &set)?;
    print!("{}", String::from_utf8_lossy(&buf));
    assert_eq!(read_logits(buf.as_slice())?, set);

    match read_logits("0,1.0,2.0\n1,oops,2.0\n".as_bytes()) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }

    let config = parse_run_config(
        r#"{
            "task": { "kind": "label-noise-blobs", "flip": 0.2 },
            "samples": 2000,
            "train": {
                "loss": {
                    "primary": { "kind": "focal", "gamma": 3.0 },
                    "secondary": { "kind": "s-avuc", "kappa": 0.9, "temperature": 0.5 },
                    "beta": 1.0,
                    "lambda": 0.0005
                },
                "epochs": 40,
                "seed": 11
            }
        }"#,
    )?;
    println!("{config:#?}");
    Ok(())
}
