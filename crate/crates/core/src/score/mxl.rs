use std::io::{Cursor, Read};

use super::ScoreError;

const CONTAINER: &str = "META-INF/container.xml";

/// Extracts the root MusicXML document named by `META-INF/container.xml`.
pub fn read_mxl_root(bytes: &[u8]) -> Result<String, ScoreError> {
    let mut archive = zip::ZipArchive::new(Cursor::new(bytes))
        .map_err(|e| ScoreError::Archive(e.to_string()))?;

    let container = read_entry(&mut archive, CONTAINER)?;
    let root = rootfile_path(&container)?;
    read_entry(&mut archive, &root)
}

fn read_entry(
    archive: &mut zip::ZipArchive<Cursor<&[u8]>>,
    name: &str,
) -> Result<String, ScoreError> {
    let mut entry = archive
        .by_name(name)
        .map_err(|e| ScoreError::Archive(format!("{name}: {e}")))?;
    let mut buf = Vec::with_capacity(entry.size() as usize);
    entry
        .read_to_end(&mut buf)
        .map_err(|e| ScoreError::Archive(format!("{name}: {e}")))?;
    String::from_utf8(buf).map_err(|e| {
        ScoreError::Archive(format!(
            "{name}: invalid UTF-8 at byte {}",
            e.utf8_error().valid_up_to()
        ))
    })
}

fn rootfile_path(container: &str) -> Result<String, ScoreError> {
    let doc = roxmltree::Document::parse(container).map_err(|e| {
        let pos = e.pos();
        ScoreError::Xml {
            line: pos.row,
            column: pos.col,
            message: format!("{CONTAINER}: {e}"),
        }
    })?;
    doc.descendants()
        .filter(|n| n.has_tag_name("rootfile"))
        .find_map(|n| n.attribute("full-path"))
        .map(str::to_owned)
        .ok_or_else(|| ScoreError::Archive(format!("{CONTAINER} names no rootfile")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use zip::write::SimpleFileOptions;

    fn archive(entries: &[(&str, &str)]) -> Vec<u8> {
        let mut out = Cursor::new(Vec::new());
        {
            let mut zw = zip::ZipWriter::new(&mut out);
            for (name, body) in entries {
                zw.start_file(*name, SimpleFileOptions::default()).unwrap();
                zw.write_all(body.as_bytes()).unwrap();
            }
            zw.finish().unwrap();
        }
        out.into_inner()
    }

    #[test]
    fn follows_container_rootfile() {
        let container = r#"<?xml version="1.0"?>
<container><rootfiles><rootfile full-path="score/main.xml" media-type="application/vnd.recordare.musicxml+xml"/></rootfiles></container>"#;
        let bytes = archive(&[
            ("META-INF/container.xml", container),
            ("score/main.xml", "<score-partwise/>"),
            ("decoy.xml", "<nope/>"),
        ]);
        assert_eq!(read_mxl_root(&bytes).unwrap(), "<score-partwise/>");
    }

    #[test]
    fn missing_container_is_an_error() {
        let bytes = archive(&[("score.xml", "<score-partwise/>")]);
        assert!(matches!(read_mxl_root(&bytes), Err(ScoreError::Archive(_))));
    }

    #[test]
    fn not_a_zip() {
        assert!(matches!(
            read_mxl_root(b"PK\x03\x04garbage"),
            Err(ScoreError::Archive(_))
        ));
    }
}
