//! Transport side of the scoring service: a fixed worker pool and a
//! line-oriented stream driver that keeps each connection's responses in
//! request order.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use rotscore::service::Service;

type Job = Box<dyn FnOnce() + Send>;

pub struct Pool {
    tx: Option<Sender<Job>>,
    workers: Vec<JoinHandle<()>>,
}

impl Pool {
    pub fn new(size: usize) -> Self {
        let (tx, rx) = mpsc::channel::<Job>();
        let rx = Arc::new(Mutex::new(rx));
        let workers = (0..size.max(1))
            .map(|_| {
                let rx = Arc::clone(&rx);
                thread::spawn(move || loop {
                    let job = rx.lock().expect("pool lock").recv();
                    match job {
                        Ok(job) => job(),
                        Err(_) => break,
                    }
                })
            })
            .collect();
        Pool { tx: Some(tx), workers }
    }

    pub fn submit(&self, job: impl FnOnce() + Send + 'static) {
        self.tx.as_ref().expect("pool open").send(Box::new(job)).expect("workers alive");
    }
}

impl Drop for Pool {
    fn drop(&mut self) {
        self.tx.take();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

/// Reads requests until end of input and writes one response line per
/// request line, in input order. Blank lines are skipped. Responses are
/// written as soon as every earlier one is done, not at end of input.
pub fn serve_stream<R: BufRead + Send, W: Write>(service: &Arc<Service>, pool: &Pool, reader: R, mut writer: W) -> io::Result<usize> {
    enum Msg {
        Done(usize, String),
        Eof(usize),
    }
    let (tx, rx): (Sender<Msg>, Receiver<Msg>) = mpsc::channel();
    std::thread::scope(|scope| {
        let feeder = scope.spawn(move || -> io::Result<()> {
            let mut submitted = 0;
            for (lineno, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let seq = submitted;
                submitted += 1;
                let (service, tx) = (Arc::clone(service), tx.clone());
                pool.submit(move || {
                    let resp = service.handle_line(&line, &format!("malformed-line-{}", lineno + 1));
                    let _ = tx.send(Msg::Done(seq, resp.to_line()));
                });
            }
            let _ = tx.send(Msg::Eof(submitted));
            Ok(())
        });
        let mut next = 0;
        let mut total = None;
        let mut pending = BTreeMap::new();
        while total != Some(next) {
            match rx.recv() {
                Ok(Msg::Done(seq, out)) => {
                    pending.insert(seq, out);
                }
                Ok(Msg::Eof(n)) => total = Some(n),
                // feeder failed before reaching the end of input
                Err(_) => break,
            }
            let before = next;
            while let Some(line) = pending.remove(&next) {
                writer.write_all(line.as_bytes())?;
                writer.write_all(b"\n")?;
                next += 1;
            }
            if next != before {
                writer.flush()?;
            }
        }
        feeder.join().map_err(|_| io::Error::other("reader thread panicked"))??;
        Ok(next)
    })
}

/// Accepts connections forever; each is served on its own thread and
/// shares the pool.
pub fn serve_tcp(service: Arc<Service>, pool: Arc<Pool>, listener: TcpListener) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let (service, pool) = (Arc::clone(&service), Arc::clone(&pool));
        thread::spawn(move || {
            let _ = handle_connection(&service, &pool, stream);
        });
    }
    Ok(())
}

fn handle_connection(service: &Arc<Service>, pool: &Pool, stream: TcpStream) -> io::Result<usize> {
    let reader = io::BufReader::new(stream.try_clone()?);
    serve_stream(service, pool, reader, io::BufWriter::new(stream))
}

pub fn bind(port: u16) -> io::Result<(TcpListener, SocketAddr)> {
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    let addr = listener.local_addr()?;
    Ok((listener, addr))
}
