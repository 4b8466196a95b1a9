use rand::Rng;

use super::corpus::{Dataset, TaggedUtterance};
use crate::rng::{stream, Purpose};

const CITIES: [&str; 6] = [
    "boston",
    "denver",
    "new york",
    "san francisco",
    "dallas",
    "los angeles",
];
const FLIGHT: [&str; 2] = ["book a flight to", "i need a ticket to"];
const WEATHER: [&str; 2] = ["what is the weather in", "show the forecast for"];

/// Ten templated utterances over two intents and the tags `O`, `B-city`,
/// `I-city`. Every split holds the same ten utterances.
pub fn tiny_corpus(seed: u64) -> Dataset {
    let mut rng = stream(seed, Purpose::Synthetic, 0);
    let train: Vec<TaggedUtterance> = (0..10)
        .map(|i| {
            let (intent, templates) = if i % 2 == 0 {
                ("book_flight", FLIGHT)
            } else {
                ("get_weather", WEATHER)
            };
            let prefix = templates[rng.random_range(0..templates.len())];
            // the first utterance always carries a two-word city so I-city occurs
            let city = if i == 0 {
                "new york"
            } else {
                CITIES[rng.random_range(0..CITIES.len())]
            };
            let mut tokens: Vec<String> = prefix.split(' ').map(str::to_string).collect();
            let mut tags = vec!["O".to_string(); tokens.len()];
            for (j, w) in city.split(' ').enumerate() {
                tokens.push(w.to_string());
                tags.push(if j == 0 { "B-city" } else { "I-city" }.to_string());
            }
            TaggedUtterance::new(tokens, tags, intent).expect("templates are well formed")
        })
        .collect();
    Dataset {
        valid: train.clone(),
        test: train.clone(),
        train,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::build_vocab;

    #[test]
    fn shape_of_tiny_corpus() {
        let ds = tiny_corpus(1);
        assert_eq!(ds.train.len(), 10);
        let (_, labels) = build_vocab(&ds.train).unwrap();
        assert_eq!(labels.n_intents(), 2);
        assert_eq!(labels.n_tags(), 3);
        assert_eq!(tiny_corpus(1), ds);
    }
}
